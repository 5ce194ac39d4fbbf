"""Reduced ordered binary decision diagrams.

Small and deliberately generic: levels are integers fixed by the caller,
nodes live in parallel arrays, and the only operations are conjunction,
disjunction, negation and a weighted model-count walk. The weighted walk
assumes complementary weights per level (w_pos + w_neg = 1) so that levels
skipped on an edge contribute a factor of one.
"""

from __future__ import annotations

FALSE = 0
TRUE = 1


class BDD:
    def __init__(self, n_levels: int):
        self.n_levels = n_levels
        # node 0 and 1 are the terminals, parked below every real level
        self.level = [n_levels, n_levels]
        self.lo = [0, 1]
        self.hi = [0, 1]
        self._unique: dict = {}
        self._memo: dict = {}

    def mk(self, level: int, lo: int, hi: int) -> int:
        if lo == hi:
            return lo
        key = (level, lo, hi)
        n = self._unique.get(key)
        if n is None:
            n = len(self.level)
            self.level.append(level)
            self.lo.append(lo)
            self.hi.append(hi)
            self._unique[key] = n
        return n

    def var(self, level: int) -> int:
        return self.mk(level, FALSE, TRUE)

    def nvar(self, level: int) -> int:
        return self.mk(level, TRUE, FALSE)

    def apply_and(self, a: int, b: int) -> int:
        if a == FALSE or b == FALSE:
            return FALSE
        if a == TRUE:
            return b
        if b == TRUE or a == b:
            return a
        return self._apply("and", a, b)

    def apply_or(self, a: int, b: int) -> int:
        if a == TRUE or b == TRUE:
            return TRUE
        if a == FALSE:
            return b
        if b == FALSE or a == b:
            return a
        return self._apply("or", a, b)

    def apply_not(self, a: int) -> int:
        if a == FALSE:
            return TRUE
        if a == TRUE:
            return FALSE
        key = ("not", a)
        r = self._memo.get(key)
        if r is None:
            r = self.mk(self.level[a], self.apply_not(self.lo[a]),
                        self.apply_not(self.hi[a]))
            self._memo[key] = r
        return r

    def _apply(self, op: str, a: int, b: int) -> int:
        if a > b:
            a, b = b, a
        key = (op, a, b)
        r = self._memo.get(key)
        if r is not None:
            return r
        la, lb = self.level[a], self.level[b]
        top = la if la < lb else lb
        a_lo, a_hi = (self.lo[a], self.hi[a]) if la == top else (a, a)
        b_lo, b_hi = (self.lo[b], self.hi[b]) if lb == top else (b, b)
        combine = self.apply_and if op == "and" else self.apply_or
        r = self.mk(top, combine(a_lo, b_lo), combine(a_hi, b_hi))
        self._memo[key] = r
        return r

    def conj(self, nodes) -> int:
        r = TRUE
        for n in nodes:
            r = self.apply_and(r, n)
            if r == FALSE:
                return FALSE
        return r

    def disj(self, nodes) -> int:
        r = FALSE
        for n in nodes:
            r = self.apply_or(r, n)
            if r == TRUE:
                return TRUE
        return r

    def eval_prob(self, root: int, w_pos, w_neg) -> float:
        """Weighted count, bottom up. Requires w_pos[l] + w_neg[l] == 1 for
        every level so skipped levels are weight-neutral."""
        for l in range(self.n_levels):
            total = w_pos[l] + w_neg[l]
            if abs(total - 1.0) > 1e-9:
                raise ValueError(
                    f"level {l} weights sum to {total!r}, not 1; the "
                    "skip-free walk would be wrong")
        cache = {FALSE: 0.0, TRUE: 1.0}
        stack = [root]
        while stack:
            n = stack[-1]
            if n in cache:
                stack.pop()
                continue
            lo, hi = self.lo[n], self.hi[n]
            missing = [m for m in (lo, hi) if m not in cache]
            if missing:
                stack.extend(missing)
                continue
            l = self.level[n]
            cache[n] = w_pos[l] * cache[hi] + w_neg[l] * cache[lo]
            stack.pop()
        return cache[root]

    def size(self, root: int) -> int:
        seen = set()
        stack = [root]
        while stack:
            n = stack.pop()
            if n in seen or n <= TRUE:
                continue
            seen.add(n)
            stack.append(self.lo[n])
            stack.append(self.hi[n])
        return len(seen)

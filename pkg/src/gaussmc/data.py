"""Rating matrices, dataset loaders, filtering and benchmark splits."""
import csv
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DuplicateRatingWarning,
    EmptyMatrix,
    InvalidFraction,
    ParseError,
    TooFewUsers,
    UserWithSingleRating,
    ValidationError,
)
from .gaussian import MaskedSignal


@dataclass(frozen=True, eq=False)
class Triplets:
    """Loose (user, item, rating) records indexed into some rating matrix."""

    users: np.ndarray
    items: np.ndarray
    ratings: np.ndarray

    def __post_init__(self):
        for name, dtype in (("users", np.intp), ("items", np.intp), ("ratings", np.float64)):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=dtype).reshape(-1))
        if not (self.users.shape == self.items.shape == self.ratings.shape):
            raise ValidationError("triplet arrays must have equal length")

    def __len__(self):
        return self.ratings.shape[0]

    def keys(self):
        return set(zip(self.users.tolist(), self.items.tolist()))

    def take(self, positions):
        return Triplets(self.users[positions], self.items[positions], self.ratings[positions])


@dataclass(frozen=True, eq=False)
class SparseRatingMatrix:
    """Observed entries of a users x items matrix, stored as sorted triplets.

    ``user_ids[u]`` and ``item_ids[i]`` give the original identifiers of the
    dense indices. Triplets are kept sorted by (user, item); rows can be
    read through :meth:`row`.
    """

    n_users: int
    n_items: int
    users: np.ndarray
    items: np.ndarray
    ratings: np.ndarray
    rating_range: tuple
    user_ids: tuple = None
    item_ids: tuple = None
    _indptr: np.ndarray = field(default=None, init=False, repr=False)

    def __post_init__(self):
        users = np.asarray(self.users, dtype=np.intp).reshape(-1)
        items = np.asarray(self.items, dtype=np.intp).reshape(-1)
        ratings = np.asarray(self.ratings, dtype=np.float64).reshape(-1)
        if not (users.shape == items.shape == ratings.shape):
            raise ValidationError("triplet arrays must have equal length")
        if self.n_users < 1 or self.n_items < 1:
            raise EmptyMatrix("rating matrix must have at least one user and one item")
        if users.size:
            if users.min() < 0 or users.max() >= self.n_users:
                raise ValidationError("user index out of range")
            if items.min() < 0 or items.max() >= self.n_items:
                raise ValidationError("item index out of range")
        order = np.lexsort((items, users))
        users, items, ratings = users[order], items[order], ratings[order]
        if users.size > 1:
            dup = (np.diff(users) == 0) & (np.diff(items) == 0)
            if dup.any():
                raise ValidationError("duplicate (user, item) pairs")
        lo, hi = (float(v) for v in self.rating_range)
        if lo > hi:
            raise ValidationError(f"invalid rating range {self.rating_range}")
        if ratings.size and (ratings.min() < lo or ratings.max() > hi):
            raise ValidationError(f"ratings fall outside the range [{lo}, {hi}]")
        user_ids = self.user_ids or tuple(str(u) for u in range(self.n_users))
        item_ids = self.item_ids or tuple(str(i) for i in range(self.n_items))
        if len(user_ids) != self.n_users or len(item_ids) != self.n_items:
            raise ValidationError("id maps do not match the matrix shape")
        counts = np.bincount(users, minlength=self.n_users)
        indptr = np.concatenate([[0], np.cumsum(counts)])
        for arr in (users, items, ratings, indptr):
            arr.setflags(write=False)
        object.__setattr__(self, "users", users)
        object.__setattr__(self, "items", items)
        object.__setattr__(self, "ratings", ratings)
        object.__setattr__(self, "rating_range", (lo, hi))
        object.__setattr__(self, "user_ids", tuple(user_ids))
        object.__setattr__(self, "item_ids", tuple(item_ids))
        object.__setattr__(self, "_indptr", indptr)

    def __len__(self):
        return self.ratings.shape[0]

    @property
    def shape(self):
        return (self.n_users, self.n_items)

    @property
    def density(self):
        return len(self) / (self.n_users * self.n_items)

    def triplets(self):
        return Triplets(self.users, self.items, self.ratings)

    def user_counts(self):
        return np.diff(self._indptr)

    def item_counts(self):
        return np.bincount(self.items, minlength=self.n_items)

    def row(self, u):
        """(item indices, ratings) observed for user ``u``, items ascending."""
        lo, hi = self._indptr[u], self._indptr[u + 1]
        return self.items[lo:hi], self.ratings[lo:hi]

    def signals(self):
        """One :class:`MaskedSignal` per user."""
        return [MaskedSignal(self.n_items, *self.row(u)) for u in range(self.n_users)]

    def to_dense(self, fill=np.nan):
        out = np.full(self.shape, fill, dtype=np.float64)
        out[self.users, self.items] = self.ratings
        return out

    def mask(self):
        out = np.zeros(self.shape, dtype=bool)
        out[self.users, self.items] = True
        return out

    def transpose(self):
        return SparseRatingMatrix(
            self.n_items, self.n_users, self.items, self.users, self.ratings,
            self.rating_range, self.item_ids, self.user_ids,
        )

    def with_ratings(self, triplets):
        """Same shape and id maps, different observed entries."""
        return SparseRatingMatrix(
            self.n_users, self.n_items, triplets.users, triplets.items, triplets.ratings,
            self.rating_range, self.user_ids, self.item_ids,
        )

    def select(self, user_keep=None, item_keep=None):
        """Restrict to the given (sorted) user / item index arrays and re-index densely."""
        user_keep = np.arange(self.n_users) if user_keep is None else np.asarray(user_keep, np.intp)
        item_keep = np.arange(self.n_items) if item_keep is None else np.asarray(item_keep, np.intp)
        if user_keep.size == 0 or item_keep.size == 0:
            raise EmptyMatrix("selection leaves an empty matrix")
        umap = np.full(self.n_users, -1, dtype=np.intp)
        umap[user_keep] = np.arange(user_keep.size)
        imap = np.full(self.n_items, -1, dtype=np.intp)
        imap[item_keep] = np.arange(item_keep.size)
        nu, ni = umap[self.users], imap[self.items]
        keep = (nu >= 0) & (ni >= 0)
        return SparseRatingMatrix(
            user_keep.size, item_keep.size, nu[keep], ni[keep], self.ratings[keep],
            self.rating_range,
            tuple(self.user_ids[u] for u in user_keep),
            tuple(self.item_ids[i] for i in item_keep),
        )

    def id_triplets(self):
        """Sorted list of (user_id, item_id, rating) with original identifiers."""
        return [
            (self.user_ids[u], self.item_ids[i], r)
            for u, i, r in zip(self.users.tolist(), self.items.tolist(), self.ratings.tolist())
        ]

    @classmethod
    def from_id_triplets(cls, records, rating_range=None):
        """Build from ``(user_id, item_id, rating)`` records.

        Ids are indexed in order of first appearance. A repeated pair keeps
        its last rating and emits :class:`DuplicateRatingWarning`.
        """
        uidx, iidx, latest = {}, {}, {}
        n_dup = 0
        for uid, iid, r in records:
            u = uidx.setdefault(uid, len(uidx))
            i = iidx.setdefault(iid, len(iidx))
            if (u, i) in latest:
                n_dup += 1
            latest[(u, i)] = float(r)
        if not latest:
            raise EmptyMatrix("no ratings found")
        if n_dup:
            warnings.warn(f"{n_dup} duplicate ratings; keeping the last occurrence",
                          DuplicateRatingWarning, stacklevel=2)
        keys = np.array(list(latest.keys()), dtype=np.intp)
        ratings = np.fromiter(latest.values(), dtype=np.float64, count=len(latest))
        if rating_range is None:
            rating_range = (float(ratings.min()), float(ratings.max()))
        return cls(len(uidx), len(iidx), keys[:, 0], keys[:, 1], ratings, tuple(rating_range),
                   tuple(uidx), tuple(iidx))


# --- loaders -----------------------------------------------------------------

def _iter_records(path, fmt):
    sep = "::" if fmt == "movielens" else ","
    with open(path, newline="", encoding="utf-8") as fh:
        lines = csv.reader(fh) if fmt == "csv" else (ln.rstrip("\r\n").split(sep) for ln in fh)
        first = True
        for lineno, fields in enumerate(lines, start=1):
            fields = [f.strip() for f in fields]
            if not fields or fields == [""]:
                continue
            if len(fields) not in (3, 4):
                raise ParseError(f"expected 3 or 4 fields, got {len(fields)}", path, lineno)
            try:
                rating = float(fields[2])
            except ValueError:
                if first and fmt == "csv":
                    first = False
                    continue  # header line
                raise ParseError(f"invalid rating {fields[2]!r}", path, lineno) from None
            first = False
            if not np.isfinite(rating):
                raise ParseError(f"invalid rating {fields[2]!r}", path, lineno)
            yield fields[0], fields[1], rating


def load_ratings(path, fmt="movielens", rating_range=None):
    """Load a ratings file into a :class:`SparseRatingMatrix`.

    ``fmt="movielens"`` reads ``UserID::MovieID::Rating::Timestamp`` lines;
    ``fmt="csv"`` reads ``user,item,rating[,timestamp]`` with an optional
    header. Timestamps are discarded. Without ``rating_range`` the range is
    taken from the data.
    """
    if fmt not in ("movielens", "csv"):
        raise ValidationError(f"unknown format {fmt!r}")
    try:
        return SparseRatingMatrix.from_id_triplets(_iter_records(path, fmt), rating_range)
    except EmptyMatrix:
        raise EmptyMatrix(f"{path}: no ratings found") from None
    except OSError as exc:
        raise ParseError(f"cannot read file: {exc.strerror or exc}", path) from exc


load_movielens = load_ratings


def save_csv(m, path, header=True):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if header:
            w.writerow(["user", "item", "rating"])
        for uid, iid, r in m.id_triplets():
            w.writerow([uid, iid, repr(r)])


# --- preprocessing -------------------------------------------------------------

def filter_matrix(m, min_user_ratings=20, min_item_ratings=2):
    """Drop sparse users and items until both thresholds hold.

    Removing an item can push a user below its threshold (and vice versa),
    so the two passes repeat until nothing changes.
    """
    if min_user_ratings < 0 or min_item_ratings < 0:
        raise ValidationError("thresholds must be nonnegative")
    users, items = m.users, m.items
    ukeep = np.ones(m.n_users, dtype=bool)
    ikeep = np.ones(m.n_items, dtype=bool)
    while True:
        live = ukeep[users] & ikeep[items]
        ucount = np.bincount(users[live], minlength=m.n_users)
        new_ukeep = ukeep & (ucount >= min_user_ratings)
        live &= new_ukeep[users]
        icount = np.bincount(items[live], minlength=m.n_items)
        new_ikeep = ikeep & (icount >= min_item_ratings)
        if np.array_equal(new_ukeep, ukeep) and np.array_equal(new_ikeep, ikeep):
            break
        ukeep, ikeep = new_ukeep, new_ikeep
    if not ukeep.any() or not ikeep.any():
        raise EmptyMatrix("filtering removed every rating")
    return m.select(np.flatnonzero(ukeep), np.flatnonzero(ikeep))


def sample_users(m, n, seed=None):
    """Random subset of ``n`` users; items left without ratings are dropped."""
    if not 1 <= n <= m.n_users:
        raise TooFewUsers(f"cannot sample {n} of {m.n_users} users")
    rng = np.random.default_rng(seed)
    keep = np.sort(rng.choice(m.n_users, size=n, replace=False))
    sub = m.select(keep)
    return sub.select(None, np.flatnonzero(sub.item_counts() > 0))


# --- splits ----------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class WeakSplit:
    """One held-out rating per user; ``train`` keeps the source's indexing."""

    source: SparseRatingMatrix
    train: SparseRatingMatrix
    test: Triplets


@dataclass(frozen=True, eq=False)
class StrongSplit:
    """Disjoint training and test users.

    ``test_users`` index the source matrix, as do the users in
    ``test_observed`` and ``test_heldout``. ``train_users`` is re-indexed
    over the training users but keeps the source's item universe.
    """

    source: SparseRatingMatrix
    train_user_index: np.ndarray
    test_users: np.ndarray
    train_users: SparseRatingMatrix
    test_observed: Triplets
    test_heldout: Triplets


def split_weak(m, seed=None):
    """Hold out one uniformly chosen rating from every user that has any."""
    counts = m.user_counts()
    if np.any(counts == 1):
        bad = int(np.flatnonzero(counts == 1)[0])
        raise UserWithSingleRating(
            f"user {m.user_ids[bad]!r} has a single rating; filter with min_user_ratings >= 2"
        )
    rng = np.random.default_rng(seed)
    active = np.flatnonzero(counts > 0)
    picks = m._indptr[active] + rng.integers(0, counts[active])
    held = np.zeros(len(m), dtype=bool)
    held[picks] = True
    all_t = m.triplets()
    return WeakSplit(m, m.with_ratings(all_t.take(~held)), all_t.take(held))


def split_strong(m, n_test_users, observed_fraction=0.5, seed=None):
    """Partition users, then split each test user's ratings into observed/held-out.

    Each test user shows ``round(observed_fraction * n)`` ratings, clamped
    to ``[1, n - 1]`` so both sides are nonempty.
    """
    if not 0.0 < observed_fraction < 1.0:
        raise InvalidFraction(f"observed_fraction must lie in (0, 1), got {observed_fraction}")
    if not 1 <= n_test_users < m.n_users:
        raise TooFewUsers(
            f"n_test_users must be in [1, {m.n_users - 1}] for {m.n_users} users, "
            f"got {n_test_users}"
        )
    rng = np.random.default_rng(seed)
    perm = rng.permutation(m.n_users)
    test_users = np.sort(perm[:n_test_users])
    train_index = np.sort(perm[n_test_users:])
    counts = m.user_counts()
    if np.any(counts[test_users] < 2):
        bad = int(test_users[np.flatnonzero(counts[test_users] < 2)[0]])
        raise UserWithSingleRating(f"test user {m.user_ids[bad]!r} has fewer than 2 ratings")
    all_t = m.triplets()
    observed, heldout = [], []
    for u in test_users:
        pos = np.arange(m._indptr[u], m._indptr[u + 1])
        rng.shuffle(pos)
        k = int(np.floor(observed_fraction * pos.size + 0.5))
        k = min(max(k, 1), pos.size - 1)
        observed.append(np.sort(pos[:k]))
        heldout.append(np.sort(pos[k:]))
    return StrongSplit(
        m, train_index, test_users, m.select(train_index),
        all_t.take(np.concatenate(observed)), all_t.take(np.concatenate(heldout)),
    )


def write_manifest(path, split):
    """CSV of every rating in ``split`` with its role (train/test_observed/test_heldout)."""
    src = split.source
    if isinstance(split, WeakSplit):
        parts = [("train", split.train.triplets()), ("test_heldout", split.test)]
    else:
        tr = split.train_users
        train_t = Triplets(split.train_user_index[tr.users], tr.items, tr.ratings)
        parts = [("train", train_t), ("test_observed", split.test_observed),
                 ("test_heldout", split.test_heldout)]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["user", "item", "rating", "role"])
        for role, t in parts:
            for u, i, r in zip(t.users.tolist(), t.items.tolist(), t.ratings.tolist()):
                w.writerow([src.user_ids[u], src.item_ids[i], repr(r), role])

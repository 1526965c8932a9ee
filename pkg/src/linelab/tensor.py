"""Minimal dense matrices: the single numeric container used everywhere.

A Matrix is a row-major array('d') plus its shape. Public operations never
mutate their operands, so values can be shared freely. Heavy loops run in
the selected kernel backend (compiled or pure, see `linelab.backend`).
"""

from array import array

from .backend import kernels


class ShapeMismatchError(ValueError):
    """Raised when operand shapes are incompatible; names both shapes."""


def _require(cond, op, a, b):
    if not cond:
        raise ShapeMismatchError(f"{op}: shapes {a.shape} and {b.shape} are incompatible")


class Matrix:
    __slots__ = ("rows", "cols", "data")

    def __init__(self, rows, cols, data=None):
        if rows < 1 or cols < 1:
            raise ValueError(f"matrix dimensions must be positive, got {rows}x{cols}")
        if data is None:
            data = kernels.zeros(rows * cols)
        elif not isinstance(data, array) or data.typecode != "d":
            data = array("d", data)
        if len(data) != rows * cols:
            raise ValueError(f"data length {len(data)} does not match shape {rows}x{cols}")
        self.rows = rows
        self.cols = cols
        self.data = data

    # -- construction -------------------------------------------------

    @classmethod
    def zeros(cls, rows, cols):
        return cls(rows, cols)

    @classmethod
    def filled(cls, rows, cols, value):
        return cls(rows, cols, array("d", [float(value)] * (rows * cols)))

    @classmethod
    def identity(cls, n):
        m = cls(n, n)
        for i in range(n):
            m.data[i * n + i] = 1.0
        return m

    @classmethod
    def from_rows(cls, rows_of_values):
        rows = len(rows_of_values)
        if rows == 0:
            raise ValueError("from_rows needs at least one row")
        cols = len(rows_of_values[0])
        flat = array("d", bytes(8 * rows * cols))
        for i, row in enumerate(rows_of_values):
            if len(row) != cols:
                raise ValueError(f"ragged rows: row 0 has {cols} entries, row {i} has {len(row)}")
            flat[i * cols : (i + 1) * cols] = array("d", row)
        return cls(rows, cols, flat)

    @classmethod
    def row_vector(cls, values):
        return cls.from_rows([list(values)])

    # -- basics --------------------------------------------------------

    @property
    def shape(self):
        return (self.rows, self.cols)

    def get(self, i, j):
        return self.data[i * self.cols + j]

    def row(self, i):
        return Matrix(1, self.cols, array("d", self.data[i * self.cols : (i + 1) * self.cols]))

    def col(self, j):
        out = Matrix(self.rows, 1)
        for i in range(self.rows):
            out.data[i] = self.data[i * self.cols + j]
        return out

    def copy(self):
        return Matrix(self.rows, self.cols, array("d", self.data))

    def take_rows(self, indices):
        out = Matrix(len(indices), self.cols)
        c = self.cols
        for r, idx in enumerate(indices):
            out.data[r * c : (r + 1) * c] = self.data[idx * c : (idx + 1) * c]
        return out

    def to_lists(self):
        return [list(self.data[i * self.cols : (i + 1) * self.cols]) for i in range(self.rows)]

    def __repr__(self):
        return f"Matrix({self.rows}x{self.cols})"

    def __eq__(self, other):
        if not isinstance(other, Matrix):
            return NotImplemented
        return self.shape == other.shape and self.data == other.data

    __hash__ = None

    # -- algebra -------------------------------------------------------

    def matmul(self, other):
        _require(self.cols == other.rows, "matmul", self, other)
        out = Matrix(self.rows, other.cols)
        kernels.matmul(self.data, self.rows, self.cols, other.data, other.cols, out.data)
        return out

    def matmul_tn(self, other):
        """transpose(self) @ other without materializing the transpose."""
        _require(self.rows == other.rows, "matmul_tn", self, other)
        out = Matrix(self.cols, other.cols)
        kernels.matmul_tn(self.data, self.rows, self.cols, other.data, other.cols, out.data)
        return out

    def matmul_nt(self, other):
        """self @ transpose(other) without materializing the transpose."""
        _require(self.cols == other.cols, "matmul_nt", self, other)
        out = Matrix(self.rows, other.rows)
        kernels.matmul_nt(self.data, self.rows, self.cols, other.data, other.rows, out.data)
        return out

    def add(self, other):
        _require(self.shape == other.shape, "add", self, other)
        out = Matrix(self.rows, self.cols)
        kernels.add(self.data, other.data, out.data, len(self.data))
        return out

    def sub(self, other):
        _require(self.shape == other.shape, "sub", self, other)
        out = Matrix(self.rows, self.cols)
        kernels.sub(self.data, other.data, out.data, len(self.data))
        return out

    def hadamard(self, other):
        _require(self.shape == other.shape, "hadamard", self, other)
        out = Matrix(self.rows, self.cols)
        kernels.hadamard(self.data, other.data, out.data, len(self.data))
        return out

    def scale(self, s):
        out = Matrix(self.rows, self.cols)
        kernels.scale(self.data, float(s), out.data, len(self.data))
        return out

    def add_row(self, vec):
        """Add a 1 x cols row vector to every row (explicit bias addition)."""
        _require(vec.rows == 1 and vec.cols == self.cols, "add_row", self, vec)
        out = Matrix(self.rows, self.cols)
        kernels.add_row(self.data, self.rows, self.cols, vec.data, out.data)
        return out

    def transpose(self):
        out = Matrix(self.cols, self.rows)
        kernels.transpose(self.data, self.rows, self.cols, out.data)
        return out

    def map(self, f):
        """Apply a scalar function elementwise (pure Python; not a hot path)."""
        out = Matrix(self.rows, self.cols)
        data = self.data
        od = out.data
        for i in range(len(data)):
            od[i] = f(data[i])
        return out

    def row_sum(self):
        """Sum each row -> rows x 1."""
        out = Matrix(self.rows, 1)
        kernels.row_sum(self.data, self.rows, self.cols, out.data)
        return out

    def col_sum(self):
        """Sum each column -> 1 x cols."""
        out = Matrix(1, self.cols)
        kernels.col_sum(self.data, self.rows, self.cols, out.data)
        return out

    def sum(self):
        s = 0.0
        for v in self.data:
            s += v
        return s

    # -- CSV -----------------------------------------------------------

    def to_csv(self, path):
        """One row per line, comma separated, '.' decimal, 17 significant digits."""
        with open(path, "w", encoding="utf-8") as fh:
            for i in range(self.rows):
                row = self.data[i * self.cols : (i + 1) * self.cols]
                fh.write(",".join(f"{v:.17g}" for v in row))
                fh.write("\n")

    @classmethod
    def from_csv(cls, path):
        rows = []
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    rows.append([float(tok) for tok in line.split(",")])
        return cls.from_rows(rows)


def max_abs_diff(a, b):
    _require(a.shape == b.shape, "max_abs_diff", a, b)
    best = 0.0
    for x, y in zip(a.data, b.data):
        d = abs(x - y)
        if d > best:
            best = d
    return best

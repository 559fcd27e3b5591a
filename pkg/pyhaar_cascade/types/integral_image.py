from dataclasses import dataclass, field

import numpy as np


@dataclass(eq=False)
class IntegralImage:
    """
    Summed-area tables of an image and of its squared intensities.

    Uses the inclusive convention: cells[y, x] is the sum of every intensity in
    columns 0..x and rows 0..y. Reads at coordinate -1 return 0.

    Attributes:
    - width: Width of the source image.
    - height: Height of the source image.
    - cells: (height, width) int64 cumulative sums.
    - squared_cells: (height, width) int64 cumulative sums of squared intensities.
    - padded: (height+1, width+1) copy of `cells` with a leading zero row and
      column, so that padded[y+1, x+1] == cells[y, x] and padded[0, :] == 0.
    - squared_padded: the same for `squared_cells`.
    """
    width: int
    height: int
    cells: np.ndarray
    squared_cells: np.ndarray
    padded: np.ndarray = field(init=False, repr=False)
    squared_padded: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.padded = np.pad(self.cells, ((1, 0), (1, 0)))
        self.squared_padded = np.pad(self.squared_cells, ((1, 0), (1, 0)))
        for array in (self.cells, self.squared_cells, self.padded, self.squared_padded):
            array.setflags(write=False)

    def cell(self, x: int, y: int) -> int:
        """
        Returns ii(x, y), with 0 for any coordinate equal to -1.
        """
        if x < 0 or y < 0:
            return 0
        return int(self.cells[y, x])

    def squared_cell(self, x: int, y: int) -> int:
        if x < 0 or y < 0:
            return 0
        return int(self.squared_cells[y, x])

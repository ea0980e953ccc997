//! Dense row-major 2D grid used for heatmaps and ownership maps.

/// Row-major 2D array with `(x, y)` indexing.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<E> {
    width: usize,
    height: usize,
    data: Vec<E>,
}

impl<E: Clone> Grid<E> {
    pub fn filled(width: usize, height: usize, value: E) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }
}

impl<E> Grid<E> {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> &E {
        &self.data[y * self.width + x]
    }

    #[inline]
    pub fn get_mut(&mut self, x: usize, y: usize) -> &mut E {
        &mut self.data[y * self.width + x]
    }

    /// Flat row-major view.
    pub fn values(&self) -> &[E] {
        &self.data
    }

    pub fn values_mut(&mut self) -> &mut [E] {
        &mut self.data
    }

    /// Iterate `(x, y, &value)` in row-major order.
    pub fn cells(&self) -> impl Iterator<Item = (usize, usize, &E)> {
        self.data
            .iter()
            .enumerate()
            .map(move |(i, v)| (i % self.width, i / self.width, v))
    }
}

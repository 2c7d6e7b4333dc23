use crate::autograd::Tensor;
use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::synth::SyntheticImage;

/// Cell layout of a square-celled image.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    pub width: usize,
    pub height: usize,
    pub cell: usize,
}

impl Grid {
    pub fn new(width: usize, height: usize, cell: usize) -> Result<Self> {
        if cell == 0 || width == 0 || height == 0 || !width.is_multiple_of(cell) || !height.is_multiple_of(cell) {
            return Err(Error::invalid(
                "cell_size",
                format!("{width}x{height} image is not divisible into {cell}-pixel cells"),
            ));
        }
        Ok(Grid { width, height, cell })
    }

    pub fn cols(&self) -> usize {
        self.width / self.cell
    }

    pub fn rows(&self) -> usize {
        self.height / self.cell
    }

    pub fn n_cells(&self) -> usize {
        self.cols() * self.rows()
    }

    /// Pixel center of cell `i` (row-major).
    pub fn center(&self, i: usize) -> (f64, f64) {
        let s = self.cell as f64;
        ((i % self.cols()) as f64 * s + s / 2.0, (i / self.cols()) as f64 * s + s / 2.0)
    }

    /// Square anchor of side `size` centered on cell `i`, clipped to the image.
    pub fn anchor(&self, i: usize, size: f64) -> BBox {
        let (cx, cy) = self.center(i);
        BBox::from_center(cx, cy, size, size).clamp_to(self.width as f64, self.height as f64)
    }

    /// `n_cells × cell²` matrix of flattened cell patches.
    pub fn patches(&self, img: &SyntheticImage) -> Result<Tensor> {
        if img.width != self.width || img.height != self.height {
            return Err(Error::invalid(
                "image",
                format!(
                    "{}x{} image for a {}x{} grid",
                    img.width, img.height, self.width, self.height
                ),
            ));
        }
        let s = self.cell;
        let mut data = Vec::with_capacity(self.n_cells() * s * s);
        for gy in 0..self.rows() {
            for gx in 0..self.cols() {
                for y in gy * s..(gy + 1) * s {
                    data.extend_from_slice(&img.pixels[y * self.width + gx * s..y * self.width + (gx + 1) * s]);
                }
            }
        }
        Tensor::matrix(self.n_cells(), s * s, data)
    }
}

/// Indices of the `p` highest scores, descending, ties by lower index.
pub fn top_p(scores: &[f64], p: usize) -> Result<Vec<usize>> {
    if p > scores.len() {
        return Err(Error::invalid(
            "num_proposals",
            format!("{p} proposals requested from {} cells", scores.len()),
        ));
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    idx.truncate(p);
    Ok(idx)
}

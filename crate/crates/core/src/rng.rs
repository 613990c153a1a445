//! Seeded random streams.
//!
//! Every random draw in the crate goes through an [`RngSpec`]: a master seed
//! plus a stream id. ChaCha8 streams are independent for distinct ids, which
//! lets parallel trials draw without coordinating.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::linalg::{Matrix, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngSpec {
    pub master_seed: u64,
    pub stream_id: u64,
}

impl RngSpec {
    pub fn new(master_seed: u64) -> Self {
        Self {
            master_seed,
            stream_id: 0,
        }
    }

    pub fn with_stream(self, stream_id: u64) -> Self {
        Self { stream_id, ..self }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.stream_id);
        rng
    }
}

pub fn gaussian_vector<R: Rng + ?Sized>(rng: &mut R, len: usize) -> Vector {
    Vector::from_fn(len, |_, _| rng.sample(StandardNormal))
}

pub fn gaussian_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Matrix {
    // Column-major fill so the draw order matches the storage order.
    let data: alloc::vec::Vec<f64> = (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect();
    Matrix::from_vec(rows, cols, data)
}

/// Uniform sample from the unit sphere `S^{len-1}`.
pub fn unit_sphere<R: Rng + ?Sized>(rng: &mut R, len: usize) -> Vector {
    loop {
        let v = gaussian_vector(rng, len);
        let norm = v.norm();
        if norm > 0.0 && norm.is_finite() {
            return v / norm;
        }
    }
}

pub fn uniform_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize, bound: f64) -> Matrix {
    let data: alloc::vec::Vec<f64> = (0..rows * cols).map(|_| rng.random_range(-bound..=bound)).collect();
    Matrix::from_vec(rows, cols, data)
}

/// Normal entries with the given standard deviation.
pub fn normal_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize, std_dev: f64) -> Matrix {
    gaussian_matrix(rng, rows, cols) * std_dev
}

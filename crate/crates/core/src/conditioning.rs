//! Reveal operators `r(·)`, their adjoints, and observations `s₀ = r(x_ref)`.

use alloc::format;
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;

use crate::error::{check_len, Error, Result};
use crate::rng::stream;

/// Shape of a state vector: a plain line of `n` values, or a row-major
/// `height × width` grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Geometry {
    Line(usize),
    Grid { height: usize, width: usize },
}

impl Geometry {
    pub fn len(&self) -> usize {
        match *self {
            Geometry::Line(n) => n,
            Geometry::Grid { height, width } => height * width,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RevealOperator {
    /// Coordinate selection; `revealed` lists the `true` positions ascending.
    Mask { mask: Vec<bool>, revealed: Vec<usize> },
    /// Block means over `factor`-wide blocks (`factor × factor` on grids).
    AvgPool { geometry: Geometry, factor: usize },
}

impl RevealOperator {
    pub fn from_mask(mask: Vec<bool>) -> Self {
        let revealed = mask.iter().enumerate().filter(|(_, &m)| m).map(|(i, _)| i).collect();
        RevealOperator::Mask { mask, revealed }
    }

    pub fn avg_pool(geometry: Geometry, factor: usize) -> Result<Self> {
        let ok = factor >= 1
            && match geometry {
                Geometry::Line(n) => n % factor == 0,
                Geometry::Grid { height, width } => height % factor == 0 && width % factor == 0,
            };
        if !ok {
            return Err(Error::InvalidConfig(format!(
                "pooling factor {factor} does not tile {geometry:?}"
            )));
        }
        Ok(RevealOperator::AvgPool { geometry, factor })
    }

    pub fn input_dim(&self) -> usize {
        match self {
            RevealOperator::Mask { mask, .. } => mask.len(),
            RevealOperator::AvgPool { geometry, .. } => geometry.len(),
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            RevealOperator::Mask { revealed, .. } => revealed.len(),
            RevealOperator::AvgPool { geometry, factor } => geometry.len() / self.block_area(*geometry, *factor),
        }
    }

    pub fn mask(&self) -> Option<&[bool]> {
        match self {
            RevealOperator::Mask { mask, .. } => Some(mask),
            RevealOperator::AvgPool { .. } => None,
        }
    }

    pub fn is_pixel_mask(&self) -> bool {
        self.mask().is_some()
    }

    fn block_area(&self, geometry: Geometry, factor: usize) -> usize {
        match geometry {
            Geometry::Line(_) => factor,
            Geometry::Grid { .. } => factor * factor,
        }
    }

    /// Input coordinates feeding output `j`, for the pooling operator.
    fn block(geometry: Geometry, factor: usize, j: usize) -> Vec<usize> {
        match geometry {
            Geometry::Line(_) => (j * factor..(j + 1) * factor).collect(),
            Geometry::Grid { width, .. } => {
                let bw = width / factor;
                let (br, bc) = (j / bw, j % bw);
                (0..factor)
                    .flat_map(|dr| (0..factor).map(move |dc| (br * factor + dr) * width + bc * factor + dc))
                    .collect()
            }
        }
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len("reveal operator input", self.input_dim(), x.len())?;
        Ok(match self {
            RevealOperator::Mask { revealed, .. } => revealed.iter().map(|&i| x[i]).collect(),
            RevealOperator::AvgPool { geometry, factor } => (0..self.output_dim())
                .map(|j| {
                    let idx = Self::block(*geometry, *factor, j);
                    idx.iter().map(|&i| x[i]).sum::<f64>() / idx.len() as f64
                })
                .collect(),
        })
    }

    /// Exact transpose of [`apply`](Self::apply).
    pub fn adjoint(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.spread(v, true)
    }

    /// Moore-Penrose pseudo-inverse: the scatter for masks, and for pooling
    /// each block filled with its target value, so `r(r⁺(v)) = v`.
    pub fn pseudo_inverse(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.spread(v, false)
    }

    fn spread(&self, v: &[f64], transpose: bool) -> Result<Vec<f64>> {
        check_len("reveal operator output", self.output_dim(), v.len())?;
        let mut out = vec![0.0; self.input_dim()];
        match self {
            RevealOperator::Mask { revealed, .. } => {
                for (&i, &vi) in revealed.iter().zip(v) {
                    out[i] = vi;
                }
            }
            RevealOperator::AvgPool { geometry, factor } => {
                for (j, &vj) in v.iter().enumerate() {
                    let idx = Self::block(*geometry, *factor, j);
                    let val = if transpose { vj / idx.len() as f64 } else { vj };
                    for i in idx {
                        out[i] = val;
                    }
                }
            }
        }
        Ok(out)
    }

    /// Smallest correction of `x` with `r(x) = s0`. For masks the revealed
    /// coordinates are overwritten, so the constraint holds bit-exactly.
    pub fn project(&self, x: &[f64], s0: &[f64]) -> Result<Vec<f64>> {
        check_len("projection target", self.output_dim(), s0.len())?;
        match self {
            RevealOperator::Mask { revealed, .. } => {
                check_len("projection input", self.input_dim(), x.len())?;
                let mut out = x.to_vec();
                for (&i, &s) in revealed.iter().zip(s0) {
                    out[i] = s;
                }
                Ok(out)
            }
            RevealOperator::AvgPool { .. } => {
                let rx = self.apply(x)?;
                let resid: Vec<f64> = s0.iter().zip(&rx).map(|(s, r)| s - r).collect();
                let corr = self.pseudo_inverse(&resid)?;
                Ok(x.iter().zip(&corr).map(|(a, b)| a + b).collect())
            }
        }
    }
}

/// The revealed data `s₀` together with the operator that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    s0: Vec<f64>,
    operator: RevealOperator,
}

impl Observation {
    pub fn new(operator: RevealOperator, s0: Vec<f64>) -> Result<Self> {
        check_len("observation", operator.output_dim(), s0.len())?;
        Ok(Self { s0, operator })
    }

    pub fn from_reference(operator: RevealOperator, reference: &[f64]) -> Result<Self> {
        let s0 = operator.apply(reference)?;
        Ok(Self { s0, operator })
    }

    pub fn s0(&self) -> &[f64] {
        &self.s0
    }

    pub fn operator(&self) -> &RevealOperator {
        &self.operator
    }

    pub fn dim(&self) -> usize {
        self.operator.input_dim()
    }

    /// `r(x) - s₀`.
    pub fn residual(&self, x: &[f64]) -> Result<Vec<f64>> {
        let rx = self.operator.apply(x)?;
        Ok(rx.iter().zip(&self.s0).map(|(a, b)| a - b).collect())
    }
}

/// Names accepted by [`standard_mask`].
pub const MASK_NAMES: [&str; 7] = ["expand", "half", "altern", "sr", "narrow", "wide", "text"];

const MASK_STREAM: u64 = 0x6d61_736b;

/// Desk-scale versions of the standard inpainting masks.
///
/// `true` marks a revealed coordinate. On grids, bands are column bands and
/// `altern` reveals even rows. `narrow`, `wide` and `text` draw from a stream
/// keyed by `seed`.
pub fn standard_mask(name: &str, geometry: Geometry, seed: u64) -> Result<RevealOperator> {
    let n = geometry.len();
    if n == 0 {
        return Err(Error::InvalidConfig("empty geometry".into()));
    }
    let (h, w) = match geometry {
        Geometry::Line(n) => (1, n),
        Geometry::Grid { height, width } => (height, width),
    };
    let is_line = matches!(geometry, Geometry::Line(_));
    let mut rng = stream(seed, MASK_STREAM);
    let mut band = |width_of_band: usize| -> Vec<bool> {
        let bw = width_of_band.clamp(1, w);
        let start = rng.random_range(0..=w - bw);
        (0..n).map(|i| !(start..start + bw).contains(&(i % w))).collect()
    };
    let mask: Vec<bool> = match name {
        "half" => {
            if is_line {
                (0..n).map(|i| i < n / 2).collect()
            } else {
                (0..n).map(|i| i / w < h / 2).collect()
            }
        }
        "altern" => {
            if is_line {
                (0..n).map(|i| i % 2 == 0).collect()
            } else {
                (0..n).map(|i| (i / w) % 2 == 0).collect()
            }
        }
        "expand" => {
            let (r0, r1, c0, c1) = if is_line {
                (0, 1, 3 * w / 8, 3 * w / 8 + (w / 4).max(1))
            } else {
                (h / 4, h / 4 + (h / 2).max(1), w / 4, w / 4 + (w / 2).max(1))
            };
            (0..n)
                .map(|i| (r0..r1).contains(&(i / w)) && (c0..c1).contains(&(i % w)))
                .collect()
        }
        "narrow" => band(w / 8),
        "wide" => band(w / 2),
        "text" => (0..n).map(|_| rng.random::<f64>() >= 0.25).collect(),
        "sr" => return RevealOperator::avg_pool(geometry, 2),
        other => return Err(Error::UnknownMask(other.to_string())),
    };
    Ok(RevealOperator::from_mask(mask))
}

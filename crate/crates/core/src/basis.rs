//! Feature maps used by the two-stage estimators.
//!
//! A covariate row `w` (the dataset covariates, optionally followed by
//! conditioning instruments) is split into *smooth* columns, expanded with a
//! polynomial of degree `q` plus `m` Gaussian bumps, and *linear* columns kept
//! as they are. Ranges for scaling and bump placement are frozen from the
//! training rows so that prediction is a pure function of the stored basis.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisSpec {
    /// Polynomial degree `q`.
    pub degree: usize,
    /// Number of evenly spaced radial bumps `m` (0 disables them).
    pub bumps: usize,
    /// Covariate columns that receive the polynomial/radial expansion.
    #[serde(default)]
    pub smooth: Vec<usize>,
}

impl BasisSpec {
    pub fn polynomial(degree: usize) -> Self {
        Self {
            degree,
            bumps: 0,
            smooth: Vec::new(),
        }
    }

    /// Degree-4 polynomial plus 10 bumps in the time covariate (column 0),
    /// which can represent the quartic-plus-bump shape of the demand curve.
    pub fn demand() -> Self {
        Self {
            degree: 4,
            bumps: 10,
            smooth: vec![0],
        }
    }
}

/// Polynomial + radial expansion of one scalar over a frozen range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Expansion1d {
    pub lo: f64,
    pub hi: f64,
    pub degree: usize,
    pub bumps: usize,
    /// Map into [-1, 1] before taking powers; raw powers otherwise.
    pub scaled: bool,
}

impl Expansion1d {
    pub fn fit(values: &[f64], degree: usize, bumps: usize, scaled: bool) -> Self {
        let (lo, hi) = values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        Self {
            lo,
            hi,
            degree,
            bumps,
            scaled,
        }
    }

    pub fn len(&self) -> usize {
        self.degree + self.bumps
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn span(&self) -> f64 {
        let s = self.hi - self.lo;
        if s > 0.0 {
            s
        } else {
            1.0
        }
    }

    /// Appends `[u, u², …, u^q, bump_1(v), …, bump_m(v)]` (no constant term).
    pub fn push(&self, v: f64, out: &mut Vec<f64>) {
        let u = if self.scaled {
            2.0 * (v - self.lo) / self.span() - 1.0
        } else {
            v
        };
        let mut p = 1.0;
        for _ in 0..self.degree {
            p *= u;
            out.push(p);
        }
        if self.bumps > 0 {
            let width = self.span() / self.bumps as f64;
            for i in 0..self.bumps {
                let center = self.lo + (i as f64 + 0.5) * width;
                let r = (v - center) / width;
                out.push((-0.5 * r * r).exp());
            }
        }
    }
}

/// Frozen covariate basis. With `tensor` the map is `[s, l ⊗ s]`, otherwise
/// `[s, l]`, where `s = [1, expansions of smooth columns]` and `l` are the
/// remaining columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateBasis {
    pub width: usize,
    pub smooth: Vec<(usize, Expansion1d)>,
    pub linear: Vec<usize>,
    pub tensor: bool,
}

impl CovariateBasis {
    /// `column(c)` returns training values of covariate column `c`.
    pub fn fit(
        width: usize,
        spec: &BasisSpec,
        tensor: bool,
        column: impl Fn(usize) -> Vec<f64>,
    ) -> Result<Self> {
        for &c in &spec.smooth {
            if c >= width {
                return Err(Error::Dimension(format!("smooth column {c} out of range for {width} covariates")));
            }
        }
        let smooth = spec
            .smooth
            .iter()
            .map(|&c| (c, Expansion1d::fit(&column(c), spec.degree, spec.bumps, true)))
            .collect();
        let linear = (0..width).filter(|c| !spec.smooth.contains(c)).collect();
        Ok(Self {
            width,
            smooth,
            linear,
            tensor,
        })
    }

    pub fn smooth_len(&self) -> usize {
        1 + self.smooth.iter().map(|(_, e)| e.len()).sum::<usize>()
    }

    pub fn len(&self) -> usize {
        let s = self.smooth_len();
        if self.tensor {
            s * (1 + self.linear.len())
        } else {
            s + self.linear.len()
        }
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Appends the smooth block `s(w)`, constant first.
    pub fn push_smooth(&self, w: &[f64], out: &mut Vec<f64>) {
        out.push(1.0);
        for (c, e) in &self.smooth {
            e.push(w[*c], out);
        }
    }

    pub fn push(&self, w: &[f64], out: &mut Vec<f64>) {
        let start = out.len();
        self.push_smooth(w, out);
        let s_len = out.len() - start;
        if self.tensor {
            for &c in &self.linear {
                for r in 0..s_len {
                    let v = w[c] * out[start + r];
                    out.push(v);
                }
            }
        } else {
            out.extend(self.linear.iter().map(|&c| w[c]));
        }
    }

    pub fn eval(&self, w: &[f64]) -> Result<Vec<f64>> {
        if w.len() != self.width {
            return Err(Error::Dimension(format!("basis expects {} covariates, got {}", self.width, w.len())));
        }
        let mut out = Vec::with_capacity(self.len());
        self.push(w, &mut out);
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expansion_layout() {
        let e = Expansion1d::fit(&[0.0, 10.0], 2, 2, true);
        let mut out = Vec::new();
        e.push(10.0, &mut out);
        assert_eq!(out.len(), 4);
        assert_eq!(&out[..2], &[1.0, 1.0]);
        // bump centers at 2.5 and 7.5 with width 5
        assert!((out[3] - (-0.5f64 * 0.25).exp()).abs() < 1e-15);
    }

    #[test]
    fn tensor_basis_dimensions() {
        let cols = vec![vec![0.0, 5.0, 10.0], vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 1.0]];
        let b = CovariateBasis::fit(3, &BasisSpec { degree: 4, bumps: 10, smooth: vec![0] }, true, |c| cols[c].clone())
            .unwrap();
        assert_eq!(b.smooth_len(), 15);
        assert_eq!(b.len(), 45);
        let phi = b.eval(&[5.0, 0.0, 1.0]).unwrap();
        assert_eq!(phi.len(), 45);
        assert!(phi[15..30].iter().all(|&v| v == 0.0));
        assert_eq!(&phi[30..45], &phi[0..15]);
    }

    #[test]
    fn linear_basis_is_intercept_plus_covariates() {
        let b = CovariateBasis::fit(2, &BasisSpec::polynomial(1), false, |_| vec![0.0]).unwrap();
        assert_eq!(b.eval(&[3.0, -1.0]).unwrap(), vec![1.0, 3.0, -1.0]);
        assert!(b.eval(&[1.0]).is_err());
    }
}

use crate::divergence::{DivergenceSpec, DomainSpec, MatrixFieldSpec};
use crate::numeric::{dist_sq, dot};
use crate::points::Points;

/// Relative width of the tie band in nearest-codeword searches.
pub const TIE_TOL: f64 = 1e-12;

/// The loss a codebook is trained under: a divergence `phi(xi, a)` or a
/// matrix-field similarity `(xi - a)^T S(a) (xi - a)`.
#[derive(Clone, Debug)]
pub enum Similarity {
    Divergence(DivergenceSpec),
    Field(MatrixFieldSpec),
}

impl From<DivergenceSpec> for Similarity {
    fn from(s: DivergenceSpec) -> Self {
        Self::Divergence(s)
    }
}

impl From<MatrixFieldSpec> for Similarity {
    fn from(s: MatrixFieldSpec) -> Self {
        Self::Field(s)
    }
}

impl Similarity {
    pub fn name(&self) -> &str {
        match self {
            Self::Divergence(s) => s.name(),
            Self::Field(s) => s.name(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Divergence(s) => s.dim(),
            Self::Field(s) => s.dim(),
        }
    }

    pub fn domain(&self) -> &DomainSpec {
        match self {
            Self::Divergence(s) => s.domain(),
            Self::Field(s) => s.domain(),
        }
    }

    /// Bregman divergences have affine bisectors and mean centroids.
    pub fn bregman(&self) -> Option<&DivergenceSpec> {
        match self {
            Self::Divergence(s) if s.is_bregman() => Some(s),
            _ => None,
        }
    }

    /// Loss of representing `xi` by codeword `a`; no domain checks.
    #[inline]
    pub fn eval(&self, xi: &[f64], a: &[f64]) -> f64 {
        match self {
            Self::Divergence(s) => s.phi(xi, a),
            Self::Field(s) => s.similarity(xi, a),
        }
    }

    /// Row-major `L` with `loss(xi, a) = |L (xi - a)|^2`, when the loss is a
    /// fixed quadratic form.
    pub fn metric_factor(&self) -> Option<Vec<f64>> {
        let m = match self {
            Self::Divergence(s) if s.is_bregman() => {
                s.generator().constant_hessian().map(|h| h * 0.5)
            }
            Self::Field(s) => s.constant_matrix(),
            Self::Divergence(_) => None,
        }?;
        let chol = m.cholesky()?;
        let l = chol.l().transpose();
        let d = l.nrows();
        Some((0..d * d).map(|k| l[(k / d, k % d)]).collect())
    }

    /// Nearest-codeword search structure for `codewords`.
    pub fn prepare(&self, codewords: &Points, origin: &[f64]) -> Prepared<'_> {
        if let Some(factor) = self.metric_factor() {
            let d = codewords.dim();
            let mut mapped = vec![0.0; codewords.len() * d];
            for (j, a) in codewords.iter().enumerate() {
                apply(&factor, a, &mut mapped[j * d..(j + 1) * d]);
            }
            return Prepared::Metric {
                sim: self,
                codewords: codewords.clone(),
                factor,
                mapped,
            };
        }
        match self.bregman() {
            Some(spec) => {
                let d = codewords.dim();
                let mut grads = Vec::with_capacity(codewords.len() * d);
                let mut kappa = Vec::with_capacity(codewords.len());
                for a in codewords.iter() {
                    let g = spec.grad(a);
                    let shift: f64 = g
                        .iter()
                        .zip(a.iter().zip(origin))
                        .map(|(gk, (ak, ok))| gk * (ak - ok))
                        .sum();
                    kappa.push(shift - spec.f(a));
                    grads.extend_from_slice(&g);
                }
                Prepared::Affine {
                    sim: self,
                    codewords: codewords.clone(),
                    origin: origin.to_vec(),
                    kappa,
                    grads,
                }
            }
            None => Prepared::Direct {
                sim: self,
                codewords: codewords.clone(),
            },
        }
    }
}

/// `out = L x` for row-major square `L`.
#[inline]
pub(crate) fn apply(l: &[f64], x: &[f64], out: &mut [f64]) {
    let d = x.len();
    for (i, o) in out.iter_mut().enumerate() {
        *o = dot(&l[i * d..(i + 1) * d], x);
    }
}

/// Outcome of a nearest-codeword search for one point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Nearest {
    pub index: usize,
    /// Loss to the selected codeword.
    pub value: f64,
    /// Gap to the runner-up (infinite for a single codeword): in score units
    /// for affine searches, in distance units `|L(xi - a)|` for metric ones.
    pub gap: f64,
    /// Affine score, or metric distance, of the selected codeword; NaN for direct searches.
    pub score: f64,
}

/// A codebook ready for repeated nearest-codeword queries.
///
/// For Bregman divergences `phi(xi, a) = F(xi) + kappa_a - <grad F(a), xi - o>`
/// with `kappa_a = <grad F(a), a - o> - F(a)`, so the search reduces to the
/// minimum of affine forms in `xi - o`. Fixed quadratic forms
/// `|L (xi - a)|^2` are searched as Euclidean distances between `L xi` and `L a`.
#[derive(Clone, Debug)]
pub enum Prepared<'a> {
    Metric {
        sim: &'a Similarity,
        codewords: Points,
        factor: Vec<f64>,
        mapped: Vec<f64>,
    },
    Affine {
        sim: &'a Similarity,
        codewords: Points,
        origin: Vec<f64>,
        kappa: Vec<f64>,
        grads: Vec<f64>,
    },
    Direct {
        sim: &'a Similarity,
        codewords: Points,
    },
}

impl Prepared<'_> {
    pub fn codewords(&self) -> &Points {
        match self {
            Self::Affine { codewords, .. }
            | Self::Direct { codewords, .. }
            | Self::Metric { codewords, .. } => codewords,
        }
    }

    /// Affine score `kappa_j - <g_j, xi - o>`, defined for the affine variant only.
    #[inline]
    pub(crate) fn score(&self, j: usize, centered: &[f64]) -> f64 {
        match self {
            Self::Affine { kappa, grads, .. } => {
                let d = centered.len();
                kappa[j] - dot(&grads[j * d..(j + 1) * d], centered)
            }
            _ => unreachable!("score is only defined for affine codebooks"),
        }
    }

    /// Nearest codeword; ties within the tie band go to the lowest index.
    pub fn nearest(&self, xi: &[f64], buf: &mut [f64]) -> Nearest {
        let n = self.codewords().len();
        match self {
            Self::Metric {
                sim,
                codewords,
                factor,
                mapped,
            } => {
                let d = xi.len();
                apply(factor, xi, &mut buf[..d]);
                let y = &buf[..d];
                let (mut best, mut best_d, mut second_d) = (0, f64::INFINITY, f64::INFINITY);
                for j in 0..n {
                    let v = dist_sq(y, &mapped[j * d..(j + 1) * d]);
                    if v < best_d {
                        second_d = best_d;
                        best_d = v;
                        best = j;
                    } else if v < second_d {
                        second_d = v;
                    }
                }
                let band = TIE_TOL * (1.0 + best_d);
                if second_d - best_d <= band {
                    best = (0..n)
                        .find(|&j| dist_sq(y, &mapped[j * d..(j + 1) * d]) <= best_d + band)
                        .unwrap_or(best);
                }
                let value = sim.eval(xi, codewords.row(best));
                Nearest {
                    index: best,
                    value,
                    gap: second_d.sqrt() - best_d.sqrt(),
                    score: best_d.sqrt(),
                }
            }
            Self::Affine {
                sim,
                codewords,
                origin,
                ..
            } => {
                for k in 0..xi.len() {
                    buf[k] = xi[k] - origin[k];
                }
                let centered = &buf[..xi.len()];
                let (mut best, mut best_s, mut second_s) = (0, f64::INFINITY, f64::INFINITY);
                for j in 0..n {
                    let s = self.score(j, centered);
                    if s < best_s {
                        second_s = best_s;
                        best_s = s;
                        best = j;
                    } else if s < second_s {
                        second_s = s;
                    }
                }
                let band = TIE_TOL * (1.0 + best_s.abs());
                if second_s - best_s <= band {
                    // resolve the tie band by the lowest index
                    best = (0..n)
                        .find(|&j| self.score(j, centered) <= best_s + band)
                        .unwrap_or(best);
                }
                let value = sim.eval(xi, codewords.row(best));
                Nearest {
                    index: best,
                    value,
                    gap: second_s - best_s,
                    score: best_s,
                }
            }
            Self::Direct { sim, codewords } => {
                let vals: Vec<f64> = codewords.iter().map(|a| sim.eval(xi, a)).collect();
                let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
                let band = TIE_TOL * (1.0 + min.abs());
                let best = vals.iter().position(|v| *v <= min + band).unwrap_or(0);
                let second = vals
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != best)
                    .map(|(_, v)| *v)
                    .fold(f64::INFINITY, f64::min);
                Nearest {
                    index: best,
                    value: vals[best],
                    gap: second - vals[best],
                    score: f64::NAN,
                }
            }
        }
    }
}

//! Finite product kernels and the trilinear corner functional.
//!
//! A [`DiscreteKernel`] is three independent finite distributions `p`, `q`,
//! `r` together with a value tensor `f[i][j][k] ∈ [0, 1]`. The two quantities
//! of interest are the mean `E(f)` and the corner functional
//!
//! ```text
//! T(f) = E( E(f | X, Y) · E(f | X, Z) · E(f | Y, Z) )
//! ```
//!
//! which is the probability that a corner lands in a set built from `f` by
//! independent labelling (see [`crate::construction`]).

mod exact;
mod io;

pub use exact::{exact_eligible, exact_evaluate, ExactValues, MAX_DYADIC_BITS, MAX_EXACT_CELLS};
pub use io::{KernelDocument, KernelFile, PiecewiseFile, KERNEL_SCHEMA_VERSION};

use crate::error::{Error, Result};

/// Tolerance used when checking that a marginal sums to one.
pub const SUM_TOLERANCE: f64 = 1e-12;

/// Default cap on the number of tensor cells a derived kernel may have.
pub const DEFAULT_CELL_BUDGET: usize = 10_000_000;

/// Dense row-major matrix used for the pairwise conditional expectations.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    fn add(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] += v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.cols).map(<[f64]>::to_vec).collect()
    }
}

/// Three finite marginal distributions plus a value tensor in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteKernel {
    p: Vec<f64>,
    q: Vec<f64>,
    r: Vec<f64>,
    /// Row-major `[i][j][k]`, length `p.len() * q.len() * r.len()`.
    values: Vec<f64>,
}

fn check_marginal(name: &str, m: &[f64]) -> Result<()> {
    if m.is_empty() {
        return Err(Error::Validation(format!("marginal {name} is empty (m >= 1 required)")));
    }
    if let Some((i, v)) = m.iter().enumerate().find(|(_, v)| !v.is_finite() || **v < 0.0) {
        return Err(Error::Validation(format!("marginal {name}[{i}] = {v} is negative or not finite")));
    }
    let s: f64 = m.iter().sum();
    if (s - 1.0).abs() > SUM_TOLERANCE {
        return Err(Error::Validation(format!(
            "marginal {name} sums to {s:.17}, not 1 within {SUM_TOLERANCE:e}"
        )));
    }
    Ok(())
}

fn check_values(values: &[f64]) -> Result<()> {
    if let Some((i, v)) = values
        .iter()
        .enumerate()
        .find(|(_, v)| !v.is_finite() || **v < 0.0 || **v > 1.0)
    {
        return Err(Error::Validation(format!("values entry {i} = {v} is outside [0, 1]")));
    }
    Ok(())
}

fn renormalize(name: &str, m: &mut [f64]) -> Result<()> {
    let s: f64 = m.iter().sum();
    if !(s.is_finite() && s > 0.0) {
        return Err(Error::Validation(format!("marginal {name} has non-positive total {s}")));
    }
    m.iter_mut().for_each(|v| *v /= s);
    Ok(())
}

impl DiscreteKernel {
    /// Builds a kernel from flat row-major values, validating every invariant.
    pub fn new(p: Vec<f64>, q: Vec<f64>, r: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        check_marginal("p", &p)?;
        check_marginal("q", &q)?;
        check_marginal("r", &r)?;
        let cells = p.len() * q.len() * r.len();
        if values.len() != cells {
            return Err(Error::Validation(format!(
                "values has {} entries, shape {}x{}x{} needs {cells}",
                values.len(),
                p.len(),
                q.len(),
                r.len()
            )));
        }
        check_values(&values)?;
        Ok(DiscreteKernel { p, q, r, values })
    }

    /// Like [`DiscreteKernel::new`], but rescales each marginal to sum to one
    /// first. Never applied implicitly.
    pub fn new_renormalized(
        mut p: Vec<f64>,
        mut q: Vec<f64>,
        mut r: Vec<f64>,
        values: Vec<f64>,
    ) -> Result<Self> {
        renormalize("p", &mut p)?;
        renormalize("q", &mut q)?;
        renormalize("r", &mut r)?;
        Self::new(p, q, r, values)
    }

    /// Builds a kernel from a nested `[m_x][m_y][m_z]` value array.
    pub fn from_nested(p: Vec<f64>, q: Vec<f64>, r: Vec<f64>, values: &[Vec<Vec<f64>>]) -> Result<Self> {
        if values.len() != p.len() {
            return Err(Error::Validation(format!(
                "values has {} rows, p has {} entries",
                values.len(),
                p.len()
            )));
        }
        let mut flat = Vec::with_capacity(p.len() * q.len() * r.len());
        for (i, plane) in values.iter().enumerate() {
            if plane.len() != q.len() {
                return Err(Error::Validation(format!(
                    "values[{i}] has {} rows, q has {} entries",
                    plane.len(),
                    q.len()
                )));
            }
            for (j, row) in plane.iter().enumerate() {
                if row.len() != r.len() {
                    return Err(Error::Validation(format!(
                        "values[{i}][{j}] has {} entries, r has {} entries",
                        row.len(),
                        r.len()
                    )));
                }
                flat.extend_from_slice(row);
            }
        }
        Self::new(p, q, r, flat)
    }

    /// Uniform marginals of the given shape with the given flat values.
    pub fn uniform(shape: [usize; 3], values: Vec<f64>) -> Result<Self> {
        let u = |m: usize| vec![1.0 / m as f64; m];
        if shape.contains(&0) {
            return Err(Error::Validation("shape dimensions must be >= 1".into()));
        }
        Self::new(u(shape[0]), u(shape[1]), u(shape[2]), values)
    }

    /// The constant kernel of value `value` on a uniform grid.
    pub fn constant(shape: [usize; 3], value: f64) -> Result<Self> {
        Self::uniform(shape, vec![value; shape.iter().product()])
    }

    /// The 2×2×2 kernel on halves which vanishes on the two diagonal cubes
    /// `(0,0,0)` and `(1,1,1)` and equals 1 elsewhere: mean 3/4, `T = 13/32`.
    pub fn diagonal_gap() -> Self {
        let mut values = vec![1.0; 8];
        values[0] = 0.0;
        values[7] = 0.0;
        DiscreteKernel { p: vec![0.5; 2], q: vec![0.5; 2], r: vec![0.5; 2], values }
    }

    /// Unchecked constructor for values derived from a valid kernel.
    pub(crate) fn from_parts(p: Vec<f64>, q: Vec<f64>, r: Vec<f64>, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), p.len() * q.len() * r.len());
        DiscreteKernel { p, q, r, values }
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.p.len(), self.q.len(), self.r.len()]
    }

    pub fn cell_count(&self) -> usize {
        self.values.len()
    }

    pub fn p(&self) -> &[f64] {
        &self.p
    }

    pub fn q(&self) -> &[f64] {
        &self.q
    }

    pub fn r(&self) -> &[f64] {
        &self.r
    }

    /// Flat row-major values.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.q.len() + j) * self.r.len() + k
    }

    #[inline]
    pub fn value(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[self.index(i, j, k)]
    }

    /// Cell weights `p_i q_j r_k` in the same layout as the values.
    pub fn weights(&self) -> Vec<f64> {
        product_weights(&self.p, &self.q, &self.r)
    }

    pub fn to_nested(&self) -> Vec<Vec<Vec<f64>>> {
        let [_, my, mz] = self.shape();
        self.values
            .chunks(my * mz)
            .map(|plane| plane.chunks(mz).map(<[f64]>::to_vec).collect())
            .collect()
    }

    /// Replaces the values, keeping the marginals. Validates the new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.values.len() {
            return Err(Error::Validation(format!(
                "expected {} values, got {}",
                self.values.len(),
                values.len()
            )));
        }
        check_values(&values)?;
        Ok(DiscreteKernel { values, ..self.clone() })
    }

    /// `E(f) = Σ p_i q_j r_k f[i][j][k]`.
    pub fn expectation(&self) -> f64 {
        let [_, my, mz] = self.shape();
        let mut total = 0.0;
        for (i, &pi) in self.p.iter().enumerate() {
            for (j, &qj) in self.q.iter().enumerate() {
                let row = &self.values[(i * my + j) * mz..(i * my + j + 1) * mz];
                let inner: f64 = row.iter().zip(&self.r).map(|(v, rk)| v * rk).sum();
                total += pi * qj * inner;
            }
        }
        total
    }

    /// `E(f | X, Y)` as an `m_x × m_y` matrix.
    pub fn conditional_xy(&self) -> Matrix {
        let [mx, my, mz] = self.shape();
        let mut out = Matrix::zeros(mx, my);
        for i in 0..mx {
            for j in 0..my {
                let row = &self.values[(i * my + j) * mz..(i * my + j + 1) * mz];
                out.data[i * my + j] = row.iter().zip(&self.r).map(|(v, rk)| v * rk).sum();
            }
        }
        out
    }

    /// `E(f | X, Z)` as an `m_x × m_z` matrix.
    pub fn conditional_xz(&self) -> Matrix {
        let [mx, my, mz] = self.shape();
        let mut out = Matrix::zeros(mx, mz);
        for i in 0..mx {
            for (j, &qj) in self.q.iter().enumerate() {
                for k in 0..mz {
                    out.add(i, k, qj * self.values[(i * my + j) * mz + k]);
                }
            }
        }
        out
    }

    /// `E(f | Y, Z)` as an `m_y × m_z` matrix.
    pub fn conditional_yz(&self) -> Matrix {
        let [_, my, mz] = self.shape();
        let mut out = Matrix::zeros(my, mz);
        for (i, &pi) in self.p.iter().enumerate() {
            for j in 0..my {
                for k in 0..mz {
                    out.add(j, k, pi * self.values[(i * my + j) * mz + k]);
                }
            }
        }
        out
    }

    /// The corner functional `T(f)`.
    pub fn t_value(&self) -> f64 {
        let [mx, my, mz] = self.shape();
        let f_xy = self.conditional_xy();
        let f_xz = self.conditional_xz();
        let f_yz = self.conditional_yz();
        let mut total = 0.0;
        for i in 0..mx {
            for j in 0..my {
                let mut inner = 0.0;
                for k in 0..mz {
                    inner += self.r[k] * f_xz.get(i, k) * f_yz.get(j, k);
                }
                total += self.p[i] * self.q[j] * f_xy.get(i, j) * inner;
            }
        }
        total
    }

    /// Multiplies every value by `beta ∈ [0, 1]`.
    pub fn scale(&self, beta: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&beta) {
            return Err(Error::Domain(format!("scale factor {beta} is outside [0, 1]")));
        }
        let values = self.values.iter().map(|v| beta * v).collect();
        Ok(DiscreteKernel { values, ..self.clone() })
    }

    /// The mixture `ε + (1 − ε) f`.
    pub fn epsilon_mix(&self, eps: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&eps) {
            return Err(Error::Domain(format!("mixing weight {eps} is outside [0, 1]")));
        }
        let values = self
            .values
            .iter()
            .map(|v| (eps + (1.0 - eps) * v).min(1.0))
            .collect();
        Ok(DiscreteKernel { values, ..self.clone() })
    }

    /// Kernel of two independent copies: marginals are Kronecker products and
    /// values multiply coordinatewise.
    pub fn tensor_product(&self, other: &DiscreteKernel) -> Self {
        let kron = |a: &[f64], b: &[f64]| -> Vec<f64> {
            a.iter().flat_map(|x| b.iter().map(move |y| x * y)).collect()
        };
        let [ax, ay, az] = self.shape();
        let [bx, by, bz] = other.shape();
        let (my, mz) = (ay * by, az * bz);
        let mut values = vec![0.0; ax * bx * my * mz];
        for ia in 0..ax {
            for ib in 0..bx {
                for ja in 0..ay {
                    for jb in 0..by {
                        let base = ((ia * bx + ib) * my + ja * by + jb) * mz;
                        for ka in 0..az {
                            let va = self.value(ia, ja, ka);
                            for kb in 0..bz {
                                values[base + ka * bz + kb] = va * other.value(ib, jb, kb);
                            }
                        }
                    }
                }
            }
        }
        DiscreteKernel::from_parts(kron(&self.p, &other.p), kron(&self.q, &other.q), kron(&self.r, &other.r), values)
    }

    /// `n`-fold tensor power under the default cell budget.
    pub fn tensor_power(&self, n: u32) -> Result<Self> {
        self.tensor_power_within(n, DEFAULT_CELL_BUDGET)
    }

    /// `n`-fold tensor power; fails when the result would exceed `budget` cells.
    pub fn tensor_power_within(&self, n: u32, budget: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Domain("tensor power exponent must be >= 1".into()));
        }
        let cells = self.cell_count();
        match cells.checked_pow(n) {
            Some(total) if total <= budget => {}
            Some(total) => {
                return Err(Error::Resource(format!(
                    "tensor power {n} of a {}-cell kernel has {total} cells, budget is {budget}",
                    cells
                )))
            }
            None => {
                return Err(Error::Resource(format!(
                    "tensor power {n} of a {cells}-cell kernel overflows the cell count (budget {budget})"
                )))
            }
        }
        let mut out = self.clone();
        for _ in 1..n {
            out = out.tensor_product(self);
        }
        Ok(out)
    }

    /// Step-function form: cut points are the cumulative sums of the marginals.
    pub fn to_piecewise(&self) -> PiecewiseKernel {
        PiecewiseKernel {
            x_cuts: cuts_from_marginal(&self.p),
            y_cuts: cuts_from_marginal(&self.q),
            z_cuts: cuts_from_marginal(&self.r),
            values: self.values.clone(),
        }
    }

    /// Exact rational mean and functional, if the kernel qualifies.
    pub fn exact(&self) -> Option<ExactValues> {
        exact_evaluate(self)
    }
}

pub(crate) fn product_weights(p: &[f64], q: &[f64], r: &[f64]) -> Vec<f64> {
    let mut w = Vec::with_capacity(p.len() * q.len() * r.len());
    for &pi in p {
        for &qj in q {
            let pq = pi * qj;
            w.extend(r.iter().map(|rk| pq * rk));
        }
    }
    w
}

fn cuts_from_marginal(m: &[f64]) -> Vec<f64> {
    let mut cuts = Vec::with_capacity(m.len() + 1);
    cuts.push(0.0);
    let mut acc = 0.0;
    for &v in &m[..m.len() - 1] {
        acc += v;
        cuts.push(acc.min(1.0));
    }
    cuts.push(1.0);
    cuts
}

/// A step function on `[0,1]^3`, constant on each product of cut intervals.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseKernel {
    pub x_cuts: Vec<f64>,
    pub y_cuts: Vec<f64>,
    pub z_cuts: Vec<f64>,
    /// Row-major per-cell constants.
    pub values: Vec<f64>,
}

fn check_cuts(name: &str, cuts: &[f64]) -> Result<()> {
    if cuts.len() < 2 {
        return Err(Error::Validation(format!("{name} needs at least two cut points")));
    }
    if cuts[0] != 0.0 {
        return Err(Error::Validation(format!("{name} must start at 0, starts at {}", cuts[0])));
    }
    let last = cuts[cuts.len() - 1];
    if (last - 1.0).abs() > SUM_TOLERANCE {
        return Err(Error::Validation(format!("{name} must end at 1, ends at {last}")));
    }
    if let Some(w) = cuts.windows(2).position(|w| !(w[1] >= w[0])) {
        return Err(Error::Validation(format!(
            "{name} decreases between positions {w} and {}",
            w + 1
        )));
    }
    Ok(())
}

impl PiecewiseKernel {
    pub fn new(x_cuts: Vec<f64>, y_cuts: Vec<f64>, z_cuts: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let pk = PiecewiseKernel { x_cuts, y_cuts, z_cuts, values };
        pk.validate()?;
        Ok(pk)
    }

    pub fn validate(&self) -> Result<()> {
        check_cuts("x_cuts", &self.x_cuts)?;
        check_cuts("y_cuts", &self.y_cuts)?;
        check_cuts("z_cuts", &self.z_cuts)?;
        let cells = self.shape().iter().product::<usize>();
        if self.values.len() != cells {
            return Err(Error::Validation(format!(
                "values has {} entries, cut grid needs {cells}",
                self.values.len()
            )));
        }
        check_values(&self.values)
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.x_cuts.len() - 1, self.y_cuts.len() - 1, self.z_cuts.len() - 1]
    }

    /// Discrete form: cell widths become the marginal probabilities.
    pub fn to_discrete(&self) -> Result<DiscreteKernel> {
        self.validate()?;
        let widths = |c: &[f64]| c.windows(2).map(|w| w[1] - w[0]).collect::<Vec<_>>();
        DiscreteKernel::new(
            widths(&self.x_cuts),
            widths(&self.y_cuts),
            widths(&self.z_cuts),
            self.values.clone(),
        )
    }
}

impl DiscreteKernel {
    /// Same as [`PiecewiseKernel::to_discrete`].
    pub fn from_piecewise(pk: &PiecewiseKernel) -> Result<Self> {
        pk.to_discrete()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn constant_kernel_functionals() {
        let k = DiscreteKernel::new(vec![0.2, 0.8], vec![1.0], vec![0.5, 0.25, 0.25], vec![0.3; 6]).unwrap();
        assert_abs_diff_eq!(k.expectation(), 0.3, epsilon = 1e-15);
        assert_abs_diff_eq!(k.t_value(), 0.027, epsilon = 1e-15);
        for m in [k.conditional_xy(), k.conditional_xz(), k.conditional_yz()] {
            assert!(m.as_slice().iter().all(|v| (v - 0.3).abs() < 1e-15));
        }
    }

    #[test]
    fn diagonal_gap_values() {
        let g = DiscreteKernel::diagonal_gap();
        assert_eq!(g.expectation(), 0.75);
        assert_eq!(g.t_value(), 13.0 / 32.0);
        // ½ on the diagonal, 1 off it: brute force over the 8 cells.
        let c = g.conditional_xy();
        for i in 0..2 {
            for j in 0..2 {
                let brute: f64 = (0..2).map(|k| 0.5 * g.value(i, j, k)).sum();
                assert_eq!(c.get(i, j), brute);
                assert_eq!(c.get(i, j), if i == j { 0.5 } else { 1.0 });
            }
        }
    }

    #[test]
    fn unit_kernel() {
        let k = DiscreteKernel::new(vec![1.0], vec![1.0], vec![1.0], vec![1.0]).unwrap();
        assert_eq!(k.expectation(), 1.0);
        assert_eq!(k.t_value(), 1.0);
    }

    #[test]
    fn validation_errors() {
        assert!(matches!(
            DiscreteKernel::new(vec![0.5, 0.4], vec![1.0], vec![1.0], vec![0.0, 0.0]),
            Err(Error::Validation(_))
        ));
        assert!(matches!(
            DiscreteKernel::new(vec![1.0], vec![1.0], vec![1.0], vec![1.5]),
            Err(Error::Validation(_))
        ));
        assert!(matches!(
            DiscreteKernel::new(vec![], vec![1.0], vec![1.0], vec![]),
            Err(Error::Validation(_))
        ));
        assert!(matches!(
            DiscreteKernel::new(vec![1.0], vec![1.0], vec![1.0], vec![0.1, 0.2]),
            Err(Error::Validation(_))
        ));
        let k = DiscreteKernel::new_renormalized(vec![1.0, 3.0], vec![2.0], vec![1.0], vec![1.0, 0.0]).unwrap();
        assert_eq!(k.p(), &[0.25, 0.75]);
    }

    #[test]
    fn tensor_power_of_diagonal_gap() {
        let g = DiscreteKernel::diagonal_gap();
        assert_eq!(g.tensor_power(1).unwrap(), g);
        let g2 = g.tensor_power(2).unwrap();
        assert_eq!(g2.shape(), [4, 4, 4]);
        assert_abs_diff_eq!(g2.t_value(), 169.0 / 1024.0, epsilon = 1e-15);
        let g3 = g.tensor_power(3).unwrap();
        assert_abs_diff_eq!(g3.expectation(), 27.0 / 64.0, epsilon = 1e-15);
        assert!(matches!(g.tensor_power(0), Err(Error::Domain(_))));
        match g.tensor_power_within(3, 100) {
            Err(Error::Resource(msg)) => assert!(msg.contains("512")),
            other => panic!("expected resource error, got {other:?}"),
        }
    }

    #[test]
    fn scale_and_mix() {
        let g = DiscreteKernel::diagonal_gap();
        assert_eq!(g.scale(1.0).unwrap(), g);
        assert_eq!(g.scale(0.0).unwrap().t_value(), 0.0);
        assert_eq!(g.scale(0.5).unwrap().t_value(), 13.0 / 256.0);
        assert!(matches!(g.scale(1.5), Err(Error::Domain(_))));
        assert_eq!(g.epsilon_mix(0.0).unwrap(), g);
        assert!(g.epsilon_mix(1.0).unwrap().values().iter().all(|&v| v == 1.0));
        assert_abs_diff_eq!(g.epsilon_mix(0.1).unwrap().expectation(), 0.775, epsilon = 1e-15);
        assert!(matches!(g.epsilon_mix(-0.1), Err(Error::Domain(_))));
    }

    #[test]
    fn piecewise_round_trip() {
        let g = DiscreteKernel::diagonal_gap();
        let pk = g.to_piecewise();
        assert_eq!(pk.x_cuts, vec![0.0, 0.5, 1.0]);
        assert_eq!(DiscreteKernel::from_piecewise(&pk).unwrap(), g);

        let k = DiscreteKernel::new(vec![0.2, 0.8], vec![1.0], vec![1.0], vec![0.1, 0.9]).unwrap();
        assert_eq!(k.to_piecewise().x_cuts, vec![0.0, 0.2, 1.0]);

        let single = PiecewiseKernel::new(vec![0.0, 1.0], vec![0.0, 1.0], vec![0.0, 1.0], vec![0.4]).unwrap();
        assert_eq!(single.to_discrete().unwrap().expectation(), 0.4);

        let degenerate = DiscreteKernel::new(vec![0.0, 1.0], vec![1.0], vec![1.0], vec![0.9, 0.3]).unwrap();
        let pk = degenerate.to_piecewise();
        assert_eq!(pk.x_cuts, vec![0.0, 0.0, 1.0]);
        assert_eq!(pk.to_discrete().unwrap().expectation(), degenerate.expectation());

        assert!(PiecewiseKernel::new(vec![0.0, 0.6, 0.5, 1.0], vec![0.0, 1.0], vec![0.0, 1.0], vec![0.0; 3]).is_err());
        assert!(PiecewiseKernel::new(vec![0.1, 1.0], vec![0.0, 1.0], vec![0.0, 1.0], vec![0.0]).is_err());
    }
}

//! Coefficient ladders and the full Lagrangian state at one time.
use crate::geometry::LagrangianMap;
use nalgebra::DVector;

/// Commuted ladder of one scalar field: `coeff[k]` holds the k-th time
/// derivative, `dcoeff[k]` its rate, `accel` the second derivative of the top level.
#[derive(Clone, Debug, PartialEq)]
pub struct Ladder {
    pub coeff: Vec<DVector<f64>>,
    pub dcoeff: Vec<DVector<f64>>,
    pub accel: DVector<f64>,
}

impl Ladder {
    pub fn zeros(depth: usize, m: usize) -> Self {
        Ladder {
            coeff: vec![DVector::zeros(m); depth + 1],
            dcoeff: vec![DVector::zeros(m); depth + 1],
            accel: DVector::zeros(m),
        }
    }

    pub fn depth(&self) -> usize {
        self.coeff.len() - 1
    }

    pub fn modes(&self) -> usize {
        self.accel.len()
    }

    /// Time derivatives 0..len of the field: the ladder, then the top rate and acceleration.
    pub fn derivs(&self, len: usize) -> Vec<DVector<f64>> {
        let k = self.depth();
        (0..len)
            .map(|j| {
                if j <= k {
                    self.coeff[j].clone()
                } else if j == k + 1 {
                    self.dcoeff[k].clone()
                } else if j == k + 2 {
                    self.accel.clone()
                } else {
                    DVector::zeros(self.modes())
                }
            })
            .collect()
    }

    /// Ladder of a polynomial in time: derivatives `d[j]` at the current time, zero beyond.
    pub fn from_derivs(depth: usize, d: &[DVector<f64>]) -> Self {
        let m = d[0].len();
        let get = |j: usize| d.get(j).cloned().unwrap_or_else(|| DVector::zeros(m));
        Ladder {
            coeff: (0..=depth).map(get).collect(),
            dcoeff: (0..=depth).map(|j| get(j + 1)).collect(),
            accel: get(depth + 2),
        }
    }

    /// Largest mismatch between a level's rate and the next level.
    pub fn consistency(&self) -> f64 {
        (0..self.depth())
            .map(|k| (&self.dcoeff[k] - &self.coeff[k + 1]).norm())
            .fold(0.0, f64::max)
    }
}

/// Theta (4 components), Lambda, Sigma and the map at one time.
#[derive(Clone, Debug)]
pub struct FieldState {
    pub t: f64,
    pub theta: [Ladder; 4],
    pub lambda: Ladder,
    pub sigma: DVector<f64>,
    pub map: LagrangianMap,
}

impl FieldState {
    pub fn depth(&self) -> usize {
        self.theta[0].depth()
    }

    pub fn theta_level(&self, k: usize) -> [DVector<f64>; 4] {
        std::array::from_fn(|nu| self.theta[nu].coeff[k].clone())
    }

    /// Length of [`FieldState::to_flat`] for depth K and basis sizes m1 (H1), m0 (H1_0).
    pub fn flat_len(depth: usize, m1: usize, m0: usize) -> usize {
        1 + (2 * depth + 3) * (4 * m1 + m0) + 4 * m1
    }

    /// t, then each Theta ladder and the Lambda ladder (levels, rates, accel), Sigma, X.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = vec![self.t];
        for l in self.theta.iter().chain(std::iter::once(&self.lambda)) {
            for v in l.coeff.iter().chain(&l.dcoeff).chain(std::iter::once(&l.accel)) {
                out.extend(v.iter());
            }
        }
        out.extend(self.sigma.iter());
        for x in &self.map.x {
            out.extend(x.iter());
        }
        out
    }

    pub fn from_flat(depth: usize, m1: usize, m0: usize, d: &[f64]) -> Option<FieldState> {
        if d.len() != Self::flat_len(depth, m1, m0) {
            return None;
        }
        let mut off = 1;
        let mut take = |m: usize| {
            let v = DVector::from_column_slice(&d[off..off + m]);
            off += m;
            v
        };
        let mut ladder = |m: usize| Ladder {
            coeff: (0..=depth).map(|_| take(m)).collect(),
            dcoeff: (0..=depth).map(|_| take(m)).collect(),
            accel: take(m),
        };
        let theta = [ladder(m1), ladder(m1), ladder(m1), ladder(m1)];
        let lambda = ladder(m0);
        let sigma = take(m1);
        let map = LagrangianMap { x: [take(m1), take(m1), take(m1)] };
        Some(FieldState { t: d[0], theta, lambda, sigma, map })
    }
}

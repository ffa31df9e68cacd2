//! Truncated Taylor series in time.
//!
//! `Ser` stores `c[j] = f^{(j)}(t0) / j!` for `j < n`. Products are truncated to
//! the shorter operand, so quantities built from a ladder of length `n` carry
//! exact time derivatives up to order `n - 1`.
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

pub const MAX_SER: usize = 9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ser {
    pub n: usize,
    pub c: [f64; MAX_SER],
}

impl Ser {
    pub fn zero(n: usize) -> Self {
        assert!(n <= MAX_SER, "series length {n} exceeds {MAX_SER}");
        Ser { n, c: [0.0; MAX_SER] }
    }

    pub fn constant(n: usize, v: f64) -> Self {
        let mut s = Ser::zero(n);
        s.c[0] = v;
        s
    }

    /// Builds a series from derivative values `d[j] = f^{(j)}`.
    pub fn from_derivs(d: &[f64]) -> Self {
        let mut s = Ser::zero(d.len());
        let mut fact = 1.0;
        for (j, v) in d.iter().enumerate() {
            if j > 0 {
                fact *= j as f64;
            }
            s.c[j] = v / fact;
        }
        s
    }

    pub fn value(&self) -> f64 {
        self.c[0]
    }

    /// j-th time derivative at the expansion point.
    pub fn deriv(&self, j: usize) -> f64 {
        if j >= self.n {
            return 0.0;
        }
        self.c[j] * factorial(j)
    }

    pub fn truncate(mut self, n: usize) -> Self {
        let n = n.min(self.n);
        for j in n..self.n {
            self.c[j] = 0.0;
        }
        self.n = n;
        self
    }

    /// Time derivative; the result is one term shorter.
    pub fn dt(&self) -> Self {
        let mut s = Ser::zero(self.n.saturating_sub(1));
        for j in 0..s.n {
            s.c[j] = (j + 1) as f64 * self.c[j + 1];
        }
        s
    }

    /// Antiderivative with the given constant; one term longer (capped).
    pub fn integral(&self, c0: f64) -> Self {
        let n = (self.n + 1).min(MAX_SER);
        let mut s = Ser::zero(n);
        s.c[0] = c0;
        for j in 1..n {
            s.c[j] = self.c[j - 1] / j as f64;
        }
        s
    }

    pub fn scale(mut self, a: f64) -> Self {
        for j in 0..self.n {
            self.c[j] *= a;
        }
        self
    }

    pub fn recip(&self) -> Self {
        let a0 = self.c[0];
        assert!(a0 != 0.0, "reciprocal of a series with zero constant term");
        let mut r = Ser::zero(self.n);
        r.c[0] = 1.0 / a0;
        for k in 1..self.n {
            let mut acc = 0.0;
            for j in 1..=k {
                acc += self.c[j] * r.c[k - j];
            }
            r.c[k] = -acc / a0;
        }
        r
    }

    pub fn sqrt(&self) -> Self {
        let a0 = self.c[0];
        assert!(a0 > 0.0, "square root of a series with nonpositive constant term");
        let mut r = Ser::zero(self.n);
        r.c[0] = a0.sqrt();
        for k in 1..self.n {
            let mut acc = self.c[k];
            for j in 1..k {
                acc -= r.c[j] * r.c[k - j];
            }
            r.c[k] = acc / (2.0 * r.c[0]);
        }
        r
    }

    pub fn div(&self, other: &Ser) -> Self {
        *self * other.recip()
    }

    /// Evaluates the truncated series at offset `s` from the expansion point.
    pub fn eval(&self, s: f64) -> f64 {
        let mut acc = 0.0;
        for j in (0..self.n).rev() {
            acc = acc * s + self.c[j];
        }
        acc
    }
}

pub fn factorial(j: usize) -> f64 {
    (1..=j).fold(1.0, |a, b| a * b as f64)
}

pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    factorial(n) / (factorial(k) * factorial(n - k))
}

impl Add for Ser {
    type Output = Ser;
    fn add(self, o: Ser) -> Ser {
        let mut s = Ser::zero(self.n.min(o.n));
        for j in 0..s.n {
            s.c[j] = self.c[j] + o.c[j];
        }
        s
    }
}

impl Sub for Ser {
    type Output = Ser;
    fn sub(self, o: Ser) -> Ser {
        let mut s = Ser::zero(self.n.min(o.n));
        for j in 0..s.n {
            s.c[j] = self.c[j] - o.c[j];
        }
        s
    }
}

impl Neg for Ser {
    type Output = Ser;
    fn neg(self) -> Ser {
        self.scale(-1.0)
    }
}

impl Mul for Ser {
    type Output = Ser;
    fn mul(self, o: Ser) -> Ser {
        let mut s = Ser::zero(self.n.min(o.n));
        for k in 0..s.n {
            let mut acc = 0.0;
            for j in 0..=k {
                acc += self.c[j] * o.c[k - j];
            }
            s.c[k] = acc;
        }
        s
    }
}

impl Mul<f64> for Ser {
    type Output = Ser;
    fn mul(self, a: f64) -> Ser {
        self.scale(a)
    }
}

impl AddAssign for Ser {
    fn add_assign(&mut self, o: Ser) {
        *self = *self + o;
    }
}

impl SubAssign for Ser {
    fn sub_assign(&mut self, o: Ser) {
        *self = *self - o;
    }
}

/// Value, gradient and Hessian in space, each a time series.
#[derive(Clone, Copy, Debug)]
pub struct SJet {
    pub v: Ser,
    pub g: [Ser; 3],
    pub h: [[Ser; 3]; 3],
}

impl SJet {
    pub fn zero(n: usize) -> Self {
        let z = Ser::zero(n);
        SJet { v: z, g: [z; 3], h: [[z; 3]; 3] }
    }

    pub fn len(&self) -> usize {
        self.v.n
    }

    pub fn mul(&self, o: &SJet) -> SJet {
        let mut r = SJet::zero(self.len().min(o.len()));
        r.v = self.v * o.v;
        for a in 0..3 {
            r.g[a] = self.g[a] * o.v + self.v * o.g[a];
        }
        for a in 0..3 {
            for b in 0..3 {
                r.h[a][b] = self.h[a][b] * o.v
                    + self.g[a] * o.g[b]
                    + self.g[b] * o.g[a]
                    + self.v * o.h[a][b];
            }
        }
        r
    }

    /// Quotient `self / o`.
    pub fn div(&self, o: &SJet) -> SJet {
        let n = self.len().min(o.len());
        let inv = o.v.recip();
        let mut q = SJet::zero(n);
        q.v = self.v * inv;
        for a in 0..3 {
            q.g[a] = (self.g[a] - q.v * o.g[a]) * inv;
        }
        for a in 0..3 {
            for b in 0..3 {
                q.h[a][b] = (self.h[a][b]
                    - q.g[a] * o.g[b]
                    - o.g[a] * q.g[b]
                    - q.v * o.h[a][b])
                    * inv;
            }
        }
        q
    }

    /// Time antiderivative with a prescribed value, gradient and Hessian at the expansion point.
    pub fn integral(&self, v0: f64, g0: [f64; 3], h0: [[f64; 3]; 3]) -> SJet {
        let mut r = SJet::zero((self.len() + 1).min(MAX_SER));
        r.v = self.v.integral(v0);
        for a in 0..3 {
            r.g[a] = self.g[a].integral(g0[a]);
            for b in 0..3 {
                r.h[a][b] = self.h[a][b].integral(h0[a][b]);
            }
        }
        r
    }

    /// Time derivative of every component.
    pub fn dt(&self) -> SJet {
        let mut r = SJet::zero(self.len().saturating_sub(1));
        r.v = self.v.dt();
        for a in 0..3 {
            r.g[a] = self.g[a].dt();
            for b in 0..3 {
                r.h[a][b] = self.h[a][b].dt();
            }
        }
        r
    }

    pub fn scale(&self, s: f64) -> SJet {
        let mut r = *self;
        r.v = r.v * s;
        for a in 0..3 {
            r.g[a] = r.g[a] * s;
            for b in 0..3 {
                r.h[a][b] = r.h[a][b] * s;
            }
        }
        r
    }

    pub fn truncate(&self, n: usize) -> SJet {
        let mut r = *self;
        r.v = r.v.truncate(n);
        for a in 0..3 {
            r.g[a] = r.g[a].truncate(n);
            for b in 0..3 {
                r.h[a][b] = r.h[a][b].truncate(n);
            }
        }
        r
    }
}

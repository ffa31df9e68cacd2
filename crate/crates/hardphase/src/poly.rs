//! Sparse polynomials in (t, x1, x2, x3) with exact differentiation.
use rand::Rng;
use std::collections::BTreeMap;
use std::ops::{Add, Mul, Neg, Sub};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Poly {
    pub terms: BTreeMap<[u8; 4], f64>,
}

impl Poly {
    pub fn zero() -> Self {
        Poly::default()
    }

    pub fn constant(c: f64) -> Self {
        let mut p = Poly::zero();
        p.push([0; 4], c);
        p
    }

    /// The coordinate function x^v (v = 0 is t).
    pub fn var(v: usize) -> Self {
        let mut e = [0u8; 4];
        e[v] = 1;
        let mut p = Poly::zero();
        p.push(e, 1.0);
        p
    }

    pub fn monomial(e: [u8; 4], c: f64) -> Self {
        let mut p = Poly::zero();
        p.push(e, c);
        p
    }

    fn push(&mut self, e: [u8; 4], c: f64) {
        if c == 0.0 {
            return;
        }
        let v = self.terms.entry(e).or_insert(0.0);
        *v += c;
        if *v == 0.0 {
            self.terms.remove(&e);
        }
    }

    /// Random polynomial of total degree <= `deg` with coefficients in [-1, 1].
    pub fn random<R: Rng>(deg: usize, rng: &mut R) -> Self {
        let mut p = Poly::zero();
        for a in 0..=deg {
            for b in 0..=deg - a {
                for c in 0..=deg - a - b {
                    for d in 0..=deg - a - b - c {
                        p.push([a as u8, b as u8, c as u8, d as u8], rng.random_range(-1.0..1.0));
                    }
                }
            }
        }
        p
    }

    pub fn degree(&self) -> usize {
        self.terms.keys().map(|e| e.iter().map(|x| *x as usize).sum()).max().unwrap_or(0)
    }

    pub fn d(&self, v: usize) -> Poly {
        let mut p = Poly::zero();
        for (e, c) in &self.terms {
            if e[v] > 0 {
                let mut f = *e;
                f[v] -= 1;
                p.push(f, c * e[v] as f64);
            }
        }
        p
    }

    pub fn scale(&self, s: f64) -> Poly {
        let mut p = Poly::zero();
        for (e, c) in &self.terms {
            p.push(*e, c * s);
        }
        p
    }

    pub fn eval(&self, x: [f64; 4]) -> f64 {
        self.terms
            .iter()
            .map(|(e, c)| c * (0..4).map(|i| x[i].powi(e[i] as i32)).product::<f64>())
            .sum()
    }

    pub fn max_abs_coef(&self) -> f64 {
        self.terms.values().fold(0.0, |a, c| a.max(c.abs()))
    }
}

impl Add for &Poly {
    type Output = Poly;
    fn add(self, o: &Poly) -> Poly {
        let mut p = self.clone();
        for (e, c) in &o.terms {
            p.push(*e, *c);
        }
        p
    }
}

impl Sub for &Poly {
    type Output = Poly;
    fn sub(self, o: &Poly) -> Poly {
        let mut p = self.clone();
        for (e, c) in &o.terms {
            p.push(*e, -*c);
        }
        p
    }
}

impl Neg for &Poly {
    type Output = Poly;
    fn neg(self) -> Poly {
        self.scale(-1.0)
    }
}

impl Mul for &Poly {
    type Output = Poly;
    fn mul(self, o: &Poly) -> Poly {
        let mut p = Poly::zero();
        for (e1, c1) in &self.terms {
            for (e2, c2) in &o.terms {
                let e = [e1[0] + e2[0], e1[1] + e2[1], e1[2] + e2[2], e1[3] + e2[3]];
                p.push(e, c1 * c2);
            }
        }
        p
    }
}

macro_rules! owned_ops {
    ($($tr:ident $f:ident),*) => {$(
        impl $tr for Poly {
            type Output = Poly;
            fn $f(self, o: Poly) -> Poly { (&self).$f(&o) }
        }
        impl $tr<&Poly> for Poly {
            type Output = Poly;
            fn $f(self, o: &Poly) -> Poly { (&self).$f(o) }
        }
        impl $tr<Poly> for &Poly {
            type Output = Poly;
            fn $f(self, o: Poly) -> Poly { self.$f(&o) }
        }
    )*};
}
owned_ops!(Add add, Sub sub, Mul mul);

impl Neg for Poly {
    type Output = Poly;
    fn neg(self) -> Poly {
        self.scale(-1.0)
    }
}

/// Minkowski signature factor eta^{mu mu}.
pub fn eta(mu: usize) -> f64 {
    if mu == 0 {
        -1.0
    } else {
        1.0
    }
}

/// Flat wave operator -d_t^2 + Laplacian.
pub fn box_op(p: &Poly) -> Poly {
    let mut r = p.d(0).d(0).scale(-1.0);
    for i in 1..4 {
        r = r + p.d(i).d(i);
    }
    r
}

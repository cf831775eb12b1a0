//! Target functions for the synthesizers: a registry of closed-form test
//! functions with exact derivative oracles, seeded random Lipschitz-1
//! piecewise-linear functions, and a central-difference fallback for
//! first-order partials.
//!
//! Every built-in target is certified to satisfy the unit Sobolev bound
//! max over multi-indices |k| <= n of ess sup |D^k f| <= 1 on [0,1]^d.

use crate::rational::{from_f64, rat, to_f64, Rat};
use num_traits::{One, Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TargetError {
    #[error("no derivative oracle for multi-index {0:?} (finite differences allow order <= 1 and n <= 2)")]
    NoOracle(Vec<u32>),
    #[error("point has wrong dimension")]
    Dimension,
}

#[derive(Debug, Clone)]
enum Kind {
    Zero,
    /// x/2 on [0,1].
    XHalf,
    /// x^2/2 on [0,1].
    X2Half,
    /// |x - 1/2| on [0,1].
    AbsCenter,
    /// x*y/2 on [0,1]^2.
    XYHalf,
    /// Continuous piecewise-linear through (xs[i], ys[i]), slopes in [-1,1].
    Pwl { xs: Vec<Rat>, ys: Vec<Rat> },
}

#[derive(Debug, Clone)]
pub struct TargetFunction {
    pub name: String,
    pub d: usize,
    /// Sobolev order: derivative oracles cover multi-indices up to |k| = n-1.
    pub n: u32,
    pub lipschitz_certificate: bool,
    kind: Kind,
    /// Debug switch: ignore closed-form partials and use finite differences.
    fd_only: bool,
}

impl TargetFunction {
    pub fn by_name(name: &str) -> Option<TargetFunction> {
        let (kind, d, n) = match name {
            "zero" => (Kind::Zero, 1, 1),
            "x_half" => (Kind::XHalf, 1, 1),
            "x2_half" => (Kind::X2Half, 1, 2),
            "abs_center" => (Kind::AbsCenter, 1, 1),
            "xy_half" => (Kind::XYHalf, 2, 2),
            _ => {
                // "pwl7:<seed>" -> random 7-kink Lipschitz-1 function.
                let seed = name.strip_prefix("pwl7:")?.parse().ok()?;
                return Some(Self::random_pwl(seed, 7));
            }
        };
        Some(TargetFunction {
            name: name.to_string(),
            d,
            n,
            lipschitz_certificate: true,
            kind,
            fd_only: false,
        })
    }

    /// Random continuous piecewise-linear function on [0,1] with `kinks`
    /// interior breakpoints, f(0) = 0, slopes drawn from {-256,...,256}/256.
    /// Deterministic in the seed.
    pub fn random_pwl(seed: u64, kinks: usize) -> TargetFunction {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pieces = kinks + 1;
        let mut xs = Vec::with_capacity(pieces + 1);
        let mut ys = Vec::with_capacity(pieces + 1);
        xs.push(Rat::zero());
        ys.push(Rat::zero());
        for i in 1..=pieces {
            let slope = rat(rng.gen_range(-256..=256), 256);
            let x = rat(i as i64, pieces as i64);
            let y = ys.last().unwrap() + slope * (&x - xs.last().unwrap());
            xs.push(x);
            ys.push(y);
        }
        TargetFunction {
            name: format!("pwl{kinks}:{seed}"),
            d: 1,
            n: 1,
            lipschitz_certificate: true,
            kind: Kind::Pwl { xs, ys },
            fd_only: false,
        }
    }

    /// Exact piecewise-linear target through the given points. `xs` must be
    /// strictly increasing and span [0,1]; slopes must lie in [-1,1].
    pub fn pwl(name: &str, xs: Vec<Rat>, ys: Vec<Rat>) -> TargetFunction {
        assert_eq!(xs.len(), ys.len());
        assert!(xs.len() >= 2);
        assert_eq!(xs[0], Rat::zero());
        assert_eq!(*xs.last().unwrap(), Rat::one());
        for i in 1..xs.len() {
            let dx = &xs[i] - &xs[i - 1];
            assert!(dx.is_positive(), "xs must be strictly increasing");
            assert!((&ys[i] - &ys[i - 1]).abs() <= dx, "slope exceeds 1");
        }
        TargetFunction {
            name: name.to_string(),
            d: 1,
            n: 1,
            lipschitz_certificate: true,
            kind: Kind::Pwl { xs, ys },
            fd_only: false,
        }
    }

    /// Returns a copy that hides its closed-form partials, exercising the
    /// finite-difference path.
    pub fn fd_only(mut self) -> Self {
        self.fd_only = true;
        self
    }

    pub fn eval_exact(&self, x: &[Rat]) -> Rat {
        assert_eq!(x.len(), self.d, "point dimension");
        match &self.kind {
            Kind::Zero => Rat::zero(),
            Kind::XHalf => &x[0] * rat(1, 2),
            Kind::X2Half => &x[0] * &x[0] * rat(1, 2),
            Kind::AbsCenter => (&x[0] - rat(1, 2)).abs(),
            Kind::XYHalf => &x[0] * &x[1] * rat(1, 2),
            Kind::Pwl { xs, ys } => {
                let p = &x[0];
                // Index of the piece containing p (clamp to the ends).
                let i = match xs.binary_search_by(|v| v.cmp(p)) {
                    Ok(i) => return ys[i].clone(),
                    Err(0) => 1,
                    Err(i) if i > xs.len() - 1 => xs.len() - 1,
                    Err(i) => i,
                };
                let slope = (&ys[i] - &ys[i - 1]) / (&xs[i] - &xs[i - 1]);
                &ys[i - 1] + slope * (p - &xs[i - 1])
            }
        }
    }

    pub fn eval_f64(&self, x: &[f64]) -> f64 {
        let xr: Vec<Rat> = x.iter().map(|&v| from_f64(v).expect("finite")).collect();
        to_f64(&self.eval_exact(&xr))
    }

    /// Exact mixed partial D^idx f at `x`, when a closed form exists.
    /// Oracles are provided for |idx| <= n - 1 (all the Taylor synthesizer
    /// needs).
    pub fn partial_exact(&self, idx: &[u32], x: &[Rat]) -> Option<Rat> {
        if self.fd_only || idx.len() != self.d {
            return None;
        }
        let order: u32 = idx.iter().sum();
        if order == 0 {
            return Some(self.eval_exact(x));
        }
        match &self.kind {
            Kind::Zero => Some(Rat::zero()),
            Kind::X2Half => match idx[0] {
                1 => Some(x[0].clone()),
                _ => None,
            },
            Kind::XYHalf => match (idx[0], idx[1]) {
                (1, 0) => Some(&x[1] * rat(1, 2)),
                (0, 1) => Some(&x[0] * rat(1, 2)),
                _ => None,
            },
            // Order-1 targets only ever need the value itself.
            Kind::XHalf | Kind::AbsCenter | Kind::Pwl { .. } => None,
        }
    }

    /// D^idx f at `x` as f64: the exact oracle when available, otherwise
    /// central differences with step 2^-20 (permitted only for first-order
    /// partials of targets with n <= 2).
    pub fn partial_f64(&self, idx: &[u32], x: &[Rat]) -> Result<f64, TargetError> {
        if idx.len() != self.d {
            return Err(TargetError::Dimension);
        }
        if let Some(v) = self.partial_exact(idx, x) {
            return Ok(to_f64(&v));
        }
        let order: u32 = idx.iter().sum();
        if order == 0 {
            return Ok(to_f64(&self.eval_exact(x)));
        }
        if order > 1 || self.n > 2 {
            return Err(TargetError::NoOracle(idx.to_vec()));
        }
        let k = idx.iter().position(|&c| c == 1).unwrap();
        let h = rat(1, 1 << 20);
        let mut hi = x.to_vec();
        let mut lo = x.to_vec();
        hi[k] += &h;
        lo[k] -= &h;
        // One-sided near the domain boundary, central inside.
        let one = Rat::one();
        let (a, b, span) = if hi[k] > one {
            (x.to_vec(), lo, h.clone())
        } else if lo[k].is_negative() {
            (hi, x.to_vec(), h.clone())
        } else {
            (hi, lo, &h * rat(2, 1))
        };
        let num = self.eval_exact(&a) - self.eval_exact(&b);
        Ok(to_f64(&(num / span)))
    }

    /// Upper bound on the Lipschitz constant of f on its domain (per the
    /// unit Sobolev certificate, every built-in target is 1-Lipschitz in
    /// each coordinate).
    pub fn lipschitz_bound(&self) -> f64 {
        1.0
    }
}

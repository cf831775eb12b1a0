//! Function-dependent synthesis for one-dimensional Lipschitz-1 targets:
//! the grid-rounded companion function f-tilde, uniform interpolation of its
//! breakpoints, and an optional cached-residual refinement that corrects
//! each coarse interval with one function from a small shared dictionary.

use crate::assemble::{Comb, Graph, Node};
use crate::codebook::{QuantMode, WeightCodebook};
use crate::gadgets::{
    cascade_apply_linear, cascade_apply_nonlinear, const_node, nonlinear_codebook, radix_for,
    scale_by_int,
};
use crate::network::QuantizedNetwork;
use crate::rational::{ceil_to_multiple, dyadic_frac_bits, pow2, rat, rat_int, round_to_multiple, to_f64, Rat};
use crate::synth::independent::SynthError;
use crate::target::TargetFunction;
use num_traits::{One, Signed, Zero};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    /// Uniform linear interpolation of f-tilde at spacing 1/T with
    /// T = ceil(1/eps), breakpoint values on the 2^-t/T grid,
    /// t = ceil(log2(1/eps)).
    InterpolationOnly,
    /// Coarse interpolation at the wider spacing T = ceil(8/(eps log2(1/eps)))
    /// plus per-interval residual corrections drawn from a dictionary of
    /// piecewise-linear functions on m sub-intervals.
    Cached,
}

#[derive(Debug, Clone)]
pub struct DependentPlan {
    pub epsilon: Rat,
    pub strategy: Strategy,
    /// Cache granularity (0 under InterpolationOnly).
    pub m: u32,
    /// Breakpoint value resolution: values are multiples of 2^-t / T.
    pub t: u32,
    /// Localization margin for the cached residuals.
    pub delta: Rat,
    pub big_t: u64,
    pub lambda: u32,
    pub mode: QuantMode,
    /// Resolution of the final 1/T rescaling weight.
    pub t_scale: u32,
}

/// Smallest k >= 0 with 2^k * q >= 1 (i.e. ceil(log2(1/q))) for q in (0,1].
fn ceil_log2_inv(q: &Rat) -> u32 {
    let mut k = 0u32;
    let mut v = q.clone();
    while v < Rat::one() {
        v *= rat_int(2);
        k += 1;
    }
    k
}

pub fn plan_dependent(
    epsilon: &Rat,
    lambda: u32,
    mode: QuantMode,
    strategy: Strategy,
) -> Result<DependentPlan, SynthError> {
    if !(epsilon > &Rat::zero() && epsilon < &Rat::one()) {
        return Err(SynthError::BadParam("epsilon must be in (0,1)".into()));
    }
    if lambda < 2 {
        return Err(SynthError::BadParam("lambda must be >= 2".into()));
    }
    if mode == QuantMode::Linear && !(lambda as u64).is_power_of_two() {
        return Err(SynthError::BadParam(
            "linear mode requires a power-of-two lambda".into(),
        ));
    }
    let (m, t, delta, big_t) = match strategy {
        Strategy::InterpolationOnly => {
            let big_t: u64 = (Rat::one() / epsilon)
                .ceil()
                .to_integer()
                .try_into()
                .expect("T fits u64");
            (0u32, ceil_log2_inv(epsilon), Rat::zero(), big_t)
        }
        Strategy::Cached => {
            // m = ceil(log2(1/eps) / 2): smallest m with 2^(2m) eps >= 1.
            let mut m = 1u32;
            while pow2(2 * m as i64) * epsilon < Rat::one() {
                m += 1;
            }
            let t = 32 - (m.max(1)).next_power_of_two().leading_zeros() - 1; // ceil(log2 m)
            let t = if 1u32 << t >= m { t } else { t + 1 };
            let delta = rat(1, 8 * m as i64);
            // T = ceil(8 / (eps log2(1/eps))): the log of a rational has no
            // exact form, so this one parameter comes from f64 arithmetic.
            let ef = to_f64(epsilon);
            let big_t = (8.0 / (ef * (1.0 / ef).log2())).ceil() as u64;
            (m, t, delta, big_t)
        }
    };
    if big_t == 0 || big_t > 1 << 22 {
        return Err(SynthError::BadParam(format!(
            "breakpoint count T = {big_t} out of supported range"
        )));
    }
    // Final rescale weight approximates 1/T; pick its resolution so the
    // induced error (at most 2T * 2^-t_scale) stays below eps/32.
    let t_scale = ceil_log2_inv(&(epsilon / rat_int(64 * big_t as i64)));
    Ok(DependentPlan {
        epsilon: epsilon.clone(),
        strategy,
        m,
        t,
        delta,
        big_t,
        lambda,
        mode,
        t_scale,
    })
}

/// Values of f-tilde at the breakpoints i/T: f(i/T) rounded up to an
/// integral multiple of 2^-t / T.
pub fn ftilde_breakpoints(f: &TargetFunction, t: u32, big_t: u64) -> Vec<Rat> {
    let step = pow2(-(t as i64)) / rat_int(big_t as i64);
    (0..=big_t)
        .map(|i| ceil_to_multiple(&f.eval_exact(&[rat(i as i64, big_t as i64)]), &step))
        .collect()
}

/// One interval of the chase dynamics: starting from value `start` at i/T,
/// travel at slope +-1 toward the shifted copy f+ of f (offset so that f+
/// lands on the rounded breakpoint at (i+1)/T), and track f+ from the
/// crossing on. Because the post-crossing value is f+ itself, the crossing
/// point never needs to be located explicitly: the sign of the remaining
/// gap decides which regime `x` is in.
fn ftilde_step(f: &TargetFunction, t: u32, big_t: u64, i: u64, start: &Rat, x: &Rat) -> Rat {
    let step = pow2(-(t as i64)) / rat_int(big_t as i64);
    let x0 = rat(i as i64, big_t as i64);
    let x1 = rat(i as i64 + 1, big_t as i64);
    let f1 = f.eval_exact(&[x1]);
    let offset = ceil_to_multiple(&f1, &step) - &f1;
    let fplus = f.eval_exact(&[x.clone()]) + &offset;
    let gap0 = f.eval_exact(&[x0.clone()]) + &offset - start;
    if gap0.is_zero() {
        return fplus;
    }
    let sgn = if gap0.is_positive() { rat_int(1) } else { rat_int(-1) };
    let line = start + &sgn * (x - &x0);
    // Gap to f+ is monotone along the chase (|f'| <= 1), so a sign flip
    // marks the crossing.
    let gap = &fplus - &line;
    if gap.is_positive() == gap0.is_positive() && !gap.is_zero() {
        line
    } else {
        fplus
    }
}

/// Pointwise f-tilde: Lipschitz-1, above f by at most 2^-t/T, and exactly
/// the rounded breakpoint value at every i/T.
pub fn ftilde_eval(f: &TargetFunction, t: u32, big_t: u64, x: &Rat) -> Rat {
    assert!(!x.is_negative() && x <= &Rat::one(), "x must be in [0,1]");
    let step = pow2(-(t as i64)) / rat_int(big_t as i64);
    let scaled = x * rat_int(big_t as i64);
    if scaled.is_integer() {
        return ceil_to_multiple(&f.eval_exact(&[x.clone()]), &step);
    }
    let i: u64 = scaled.floor().to_integer().try_into().expect("in range");
    let start = ceil_to_multiple(
        &f.eval_exact(&[rat(i as i64, big_t as i64)]),
        &step,
    );
    ftilde_step(f, t, big_t, i, &start, x)
}

/// One slope change of the assembled network, contributing
/// `coeff * relu(u - bias)` in the T-scaled coordinate u = Tx.
/// `bias = None` marks the constant term `coeff * 1`.
struct SlopeTerm {
    bias: Option<Rat>,
    coeff: Rat,
}

/// Fractional-bit depth of a weight in [-1,1] (cascades need the weight as
/// a multiple of 2^-depth).
fn frac_depth(w: &Rat) -> u32 {
    let a = w.abs();
    if a.is_zero() || a.is_one() {
        1
    } else {
        *dyadic_frac_bits(&a).last().expect("nonzero") as u32
    }
}

/// Splits a dyadic coefficient into `w * 2^k` with |w| <= 1 and k >= 0.
fn normalize_coeff(coeff: &Rat) -> (Rat, i64) {
    let mut w = coeff.clone();
    let mut k = 0i64;
    while w.abs() > Rat::one() {
        w /= rat_int(2);
        k += 1;
    }
    (w, k)
}

/// Largest power of two <= q (q > 0).
fn pow2_floor(q: &Rat) -> Rat {
    assert!(q.is_positive());
    let mut v = Rat::one();
    if v <= *q {
        while &v * rat_int(2) <= *q {
            v *= rat_int(2);
        }
    } else {
        while v > *q {
            v /= rat_int(2);
        }
    }
    v
}

/// Residual dictionary entry: node values of a piecewise-linear candidate
/// on the sub-grid {0, h, ..., mh}, ramped back to zero over [mh, mh+rw]
/// and identically zero outside [0, mh+rw].
fn cand_eval(vals: &[Rat], h: &Rat, rw: &Rat, y: &Rat) -> Rat {
    let m = vals.len() - 1;
    let mh = h * rat_int(m as i64);
    if y.is_negative() || y >= &(&mh + rw) {
        return Rat::zero();
    }
    if y < &mh {
        let j: usize = (y / h).floor().to_integer().try_into().expect("small");
        let y0 = h * rat_int(j as i64);
        let frac = (y - y0) / h;
        return &vals[j] + (&vals[j + 1] - &vals[j]) * frac;
    }
    // Ramp back to zero.
    let frac = (y - &mh) / rw;
    &vals[m] * (Rat::one() - frac)
}

/// Per-interval residual selection: the candidate (over all 3^m increment
/// sequences) minimizing the sampled sup-deviation from the scaled residual
/// R(y) = T (f-tilde - coarse line) on the interval. The all-zero candidate
/// is always available, so a correction never hurts.
fn pick_residual(
    f: &TargetFunction,
    plan: &DependentPlan,
    v: &[Rat],
    i: u64,
    h: &Rat,
    rw: &Rat,
) -> Vec<Rat> {
    let m = plan.m as usize;
    let big_t = plan.big_t;
    let letter = pow2(1 - plan.t as i64);
    let slope = (&v[i as usize + 1] - &v[i as usize]) * rat_int(big_t as i64);
    let samples: Vec<(Rat, Rat)> = (0..=16 * m as u64)
        .map(|q| {
            let y = rat(q as i64, 16 * m as i64);
            let x = rat(i as i64, big_t as i64) + &y / rat_int(big_t as i64);
            let line = &v[i as usize] + &slope * (&x - rat(i as i64, big_t as i64));
            let r = (ftilde_eval(f, plan.t, big_t, &x) - line) * rat_int(big_t as i64);
            (y, r)
        })
        .collect();
    let mut best_vals: Vec<Rat> = vec![Rat::zero(); m + 1];
    let mut best_score: Option<Rat> = None;
    let n_cands = 3u64.pow(m as u32);
    for code in 0..n_cands {
        let mut vals = vec![Rat::zero()];
        let mut rem = code;
        for _ in 0..m {
            let digit = rem % 3; // 0, +1, -1
            rem /= 3;
            let inc = match digit {
                0 => Rat::zero(),
                1 => letter.clone(),
                _ => -letter.clone(),
            };
            vals.push(vals.last().unwrap() + inc);
        }
        let score = samples
            .iter()
            .map(|(y, r)| (r - cand_eval(&vals, h, rw, y)).abs())
            .max()
            .unwrap();
        if best_score.as_ref().is_none_or(|b| &score < b) {
            best_score = Some(score);
            best_vals = vals;
        }
    }
    best_vals
}

/// Slope terms of one residual candidate, in the global u coordinate
/// (interval i occupies u in [i, i+1]).
fn residual_terms(vals: &[Rat], h: &Rat, rw: &Rat, i: u64, out: &mut Vec<SlopeTerm>) {
    let m = vals.len() - 1;
    let mh = h * rat_int(m as i64);
    // Piece slopes, then the ramp, then flat zero.
    let mut slopes: Vec<Rat> = (0..m)
        .map(|j| (&vals[j + 1] - &vals[j]) / h)
        .collect();
    slopes.push(-&vals[m] / rw);
    slopes.push(Rat::zero());
    let mut breakpoints: Vec<Rat> = (0..m).map(|j| h * rat_int(j as i64)).collect();
    breakpoints.push(mh.clone());
    breakpoints.push(&mh + rw);
    let mut prev = Rat::zero();
    for (b, s) in breakpoints.iter().zip(&slopes) {
        let inc = s - &prev;
        prev = s.clone();
        if !inc.is_zero() {
            out.push(SlopeTerm {
                bias: Some(rat_int(i as i64) + b),
                coeff: inc,
            });
        }
    }
}

fn apply_cascade(
    g: &mut Graph,
    input: &Comb,
    w: &Rat,
    mode: QuantMode,
    rho: u32,
    lambda: u32,
) -> Comb {
    match mode {
        QuantMode::Nonlinear => cascade_apply_nonlinear(g, input, w, rho, lambda),
        QuantMode::Linear => cascade_apply_linear(g, input, w, frac_depth(w), lambda as u64),
    }
}

/// Builds the network: u = Tx, one gadget-weighted slope change per term,
/// and a final gadget weight approximating 1/T to undo the scaling. All
/// breakpoint values are exact multiples of 2^-t/T, so every coefficient
/// reaching a cascade is dyadic.
pub fn build_dependent(
    f: &TargetFunction,
    plan: &DependentPlan,
) -> Result<QuantizedNetwork, SynthError> {
    if f.d != 1 {
        return Err(SynthError::Mismatch("dependent synthesis needs d = 1".into()));
    }
    if !f.lipschitz_certificate {
        return Err(SynthError::Mismatch(
            "target lacks a Lipschitz-1 certificate".into(),
        ));
    }
    let big_t = plan.big_t;
    let v = ftilde_breakpoints(f, plan.t, big_t);

    // Coarse interpolation: the T-scaled base value, then slope changes at
    // the breakpoints.
    let mut terms: Vec<SlopeTerm> = Vec::new();
    let tv0 = &v[0] * rat_int(big_t as i64);
    if !tv0.is_zero() {
        terms.push(SlopeTerm {
            bias: None,
            coeff: tv0,
        });
    }
    let mut prev_slope = Rat::zero();
    for i in 0..big_t {
        let s = (&v[i as usize + 1] - &v[i as usize]) * rat_int(big_t as i64);
        let inc = &s - &prev_slope;
        prev_slope = s;
        if !inc.is_zero() {
            terms.push(SlopeTerm {
                bias: Some(rat_int(i as i64)),
                coeff: inc,
            });
        }
    }

    // Cached residual corrections.
    if plan.strategy == Strategy::Cached {
        let m = plan.m as i64;
        let h = pow2_floor(&((Rat::one() - &plan.delta) / rat_int(m)));
        let rw = pow2_floor(&(Rat::one() - &h * rat_int(m)));
        for i in 0..big_t {
            let vals = pick_residual(f, plan, &v, i, &h, &rw);
            residual_terms(&vals, &h, &rw, i, &mut terms);
        }
    }

    // Every cascade weight, to size the codebook once.
    let w_scale = round_to_multiple(
        &(Rat::one() / rat_int(big_t as i64)),
        &pow2(-(plan.t_scale as i64)),
    );
    let mut t_max = frac_depth(&w_scale).max(2);
    let normalized: Vec<(Rat, i64)> = terms
        .iter()
        .map(|s| {
            let (mut w, mut k) = normalize_coeff(&s.coeff);
            // Constant terms feed the cascade a pure bias 2^k, which gets
            // halved at its gates: keep it an even integer.
            if s.bias.is_none() && k == 0 {
                w /= rat_int(2);
                k = 1;
            }
            (w, k)
        })
        .collect();
    for (w, _) in &normalized {
        t_max = t_max.max(frac_depth(w));
    }
    let (rho, book) = match plan.mode {
        QuantMode::Nonlinear => {
            let (rho, _) = radix_for(t_max, plan.lambda)?;
            (rho, nonlinear_codebook(plan.lambda, rho))
        }
        QuantMode::Linear => (
            2,
            WeightCodebook::linear(plan.lambda as u64)
                .map_err(|e| SynthError::BadParam(e.to_string()))?,
        ),
    };

    let mut g = Graph::new(book, 1, true);
    let x = g.input(0);
    let u = scale_by_int(&mut g, &Comb::of(x), big_t);
    // Fractional bias parts are not codebook-realizable directly; share one
    // constant node per distinct fractional value.
    let mut frac_nodes: BTreeMap<Rat, Node> = BTreeMap::new();
    let mut z = Comb::new();
    for (term, (w, k)) in terms.iter().zip(&normalized) {
        let input = match &term.bias {
            Some(bias) => {
                let whole = bias.floor();
                let fr = bias - &whole;
                let mut pre = u.clone().bias(-Rat::from_integer(whole.to_integer()));
                if !fr.is_zero() {
                    let node = *frac_nodes
                        .entry(fr.clone())
                        .or_insert_with(|| const_node(&mut g, &fr).expect("nonzero"));
                    pre = pre.term(node, rat_int(-1));
                }
                let gate = g.relu(pre);
                Comb::of(gate).scaled(&pow2(*k))
            }
            None => Comb::new().bias(pow2(*k)),
        };
        let contrib = apply_cascade(&mut g, &input, w, plan.mode, rho, plan.lambda);
        z = z.add(&contrib);
    }
    let out = if z.is_zero() {
        Comb::new()
    } else {
        // Split through a ReLU pair so the rescale cascade only ever sees
        // +-1 coefficients (the raw cascade outputs halved would fall off
        // the codebook's integer-combination lattice).
        let zp = g.relu(z.clone());
        let zn = g.relu(z.neg());
        let split = Comb::of(zp).term(zn, rat_int(-1));
        apply_cascade(&mut g, &split, &w_scale, plan.mode, rho, plan.lambda)
    };
    let mut net = g.finish(vec![out]);
    net.domain = Some((Rat::zero(), Rat::one()));
    Ok(net)
}

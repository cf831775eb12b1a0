//! Certification harness: parallel grid scans of the sup-norm error with
//! exact spot audits, an interpolation oracle implemented independently of
//! the network evaluator, and a seeded property suite (including mutation
//! checks that keep the properties honest).

use crate::bounds::{lambda_opt, memory_bound, ms, BoundModel};
use crate::gadgets::{build_h_block, build_multiplier, build_squaring, build_weight_gadget_nonlinear};
use crate::json::{from_json, to_json};
use crate::network::QuantizedNetwork;
use crate::rational::{pow2, rat, rat_int, round_to_multiple, to_f64, Rat};
use crate::synth::dependent::ftilde_breakpoints;
use crate::target::TargetFunction;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("grid of {0} points exceeds the 10^7 resource cap")]
    ResourceCap(u64),
    #[error("breakpoints must be sorted strictly by x")]
    Unsorted,
    #[error("dimension mismatch between network and target")]
    Dimension,
    #[error("float and exact paths disagree by {0} at the argmax")]
    ExactMismatch(f64),
    #[error("grid spacing must divide 1 into an integer number of steps")]
    BadSpacing,
}

/// Outcome of a sup-norm grid scan. The certified value adds a slope slack
/// of 2 * spacing * combined Lipschitz bound on top of the measurement, so
/// a passing certificate covers the whole domain, not just the lattice.
#[derive(Debug, Clone, Serialize)]
pub struct Certificate {
    /// Grid spacing as an exact "num/den" string.
    pub grid_spacing: String,
    pub measured_sup_error: f64,
    pub certified_sup_error: f64,
    pub target_epsilon: f64,
    pub pass: bool,
    /// |float - exact| at the argmax point (the spot audit).
    pub audit_gap: f64,
}

impl Certificate {
    pub fn to_json(&self) -> Vec<u8> {
        serde_json::to_vec_pretty(self).expect("serializable")
    }
}

/// Scans the uniform grid of the given spacing over [0,1]^d, measuring
/// max |net(x) - f(x)| on the float path and auditing the argmax point on
/// the exact path. `combined_lipschitz` bounds the slopes of f and the
/// network together (used for the off-lattice slack).
pub fn sup_error(
    net: &QuantizedNetwork,
    f: &TargetFunction,
    grid_spacing: &Rat,
    target_epsilon: f64,
    combined_lipschitz: f64,
) -> Result<Certificate, VerifyError> {
    if net.input_dim != f.d {
        return Err(VerifyError::Dimension);
    }
    let inv = Rat::one() / grid_spacing;
    if !inv.is_integer() || !grid_spacing.is_positive() {
        return Err(VerifyError::BadSpacing);
    }
    let steps: u64 = inv.to_integer().to_u64().ok_or(VerifyError::BadSpacing)?;
    let d = net.input_dim as u32;
    let total = (steps + 1)
        .checked_pow(d)
        .ok_or(VerifyError::ResourceCap(u64::MAX))?;
    if total > 10_000_000 {
        return Err(VerifyError::ResourceCap(total));
    }
    let decode = |mut idx: u64| -> Vec<u64> {
        let mut p = vec![0u64; d as usize];
        for k in 0..d as usize {
            p[k] = idx % (steps + 1);
            idx /= steps + 1;
        }
        p
    };
    // Deterministic max: largest deviation, lowest index breaking ties.
    let (worst_idx, measured) = (0..total)
        .into_par_iter()
        .map(|idx| {
            let p = decode(idx);
            let x: Vec<f64> = p.iter().map(|&k| k as f64 / steps as f64).collect();
            let dev = (net.eval_f64(&x).expect("validated") - f.eval_f64(&x)).abs();
            (idx, dev)
        })
        .reduce(
            || (0, f64::NEG_INFINITY),
            |a, b| {
                if b.1 > a.1 || (b.1 == a.1 && b.0 < a.0) {
                    b
                } else {
                    a
                }
            },
        );
    // Exact spot audit at the argmax.
    let p = decode(worst_idx);
    let xr: Vec<Rat> = p.iter().map(|&k| rat(k as i64, steps as i64)).collect();
    let exact = (net.eval(&xr).expect("validated") - f.eval_exact(&xr)).abs();
    let audit_gap = (to_f64(&exact) - measured).abs();
    if audit_gap > 1e-12 {
        return Err(VerifyError::ExactMismatch(audit_gap));
    }
    let slack = 2.0 * to_f64(grid_spacing) * combined_lipschitz;
    let certified = measured + slack;
    Ok(Certificate {
        grid_spacing: crate::rational::format_rat(grid_spacing),
        measured_sup_error: measured,
        certified_sup_error: certified,
        target_epsilon,
        pass: certified <= target_epsilon,
        audit_gap,
    })
}

/// Exact piecewise-linear evaluator over sorted (x, y) breakpoints, written
/// from the line equation up and sharing no code with the network
/// evaluator; this is the independent oracle for interpolation values.
pub struct InterpOracle {
    points: Vec<(Rat, Rat)>,
}

pub fn reference_interp_oracle(points: Vec<(Rat, Rat)>) -> Result<InterpOracle, VerifyError> {
    if points.len() < 2 || points.windows(2).any(|w| w[0].0 >= w[1].0) {
        return Err(VerifyError::Unsorted);
    }
    Ok(InterpOracle { points })
}

impl InterpOracle {
    /// Value at `x` (clamped to the covered range's end segments).
    pub fn eval(&self, x: &Rat) -> Rat {
        let mut i = 1;
        while i + 1 < self.points.len() && x > &self.points[i].0 {
            i += 1;
        }
        let (x0, y0) = &self.points[i - 1];
        let (x1, y1) = &self.points[i];
        y0 + (y1 - y0) * (x - x0) / (x1 - x0)
    }
}

/// One entry of the property-suite report.
#[derive(Debug, Clone, Serialize)]
pub struct PropertyResult {
    pub name: String,
    pub passed: bool,
    pub cases: u64,
    /// Largest margin left before the property's tolerance (0 when binary).
    pub max_slack: f64,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub seed: u64,
    pub entries: Vec<PropertyResult>,
    pub all_passed: bool,
}

impl SuiteReport {
    pub fn to_json(&self) -> Vec<u8> {
        serde_json::to_vec_pretty(self).expect("serializable")
    }

    pub fn to_table(&self) -> String {
        let mut out = String::from("property                              cases   slack        result\n");
        for e in &self.entries {
            out.push_str(&format!(
                "{:<38}{:<8}{:<13.3e}{}\n",
                e.name,
                e.cases,
                e.max_slack,
                if e.passed { "pass" } else { "FAIL" }
            ));
        }
        out
    }
}

/// Returns a copy of `net` with one edge's weight index swapped for the
/// index of the negated codebook value (a single sign flip), for mutation
/// testing. Panics if the codebook lacks the negated value.
pub fn flip_one_weight(net: &QuantizedNetwork, layer: usize, unit: usize, edge: usize) -> QuantizedNetwork {
    let mut out = net.clone();
    let e = &mut out.layers[layer].units[unit].incoming[edge];
    let v = -&out.codebook.values()[e.weight_idx];
    e.weight_idx = out
        .codebook
        .index_of(&v)
        .expect("codebook closed under negation");
    out
}

fn prop(name: &str, cases: u64, max_slack: f64, passed: bool, detail: String) -> PropertyResult {
    PropertyResult {
        name: name.to_string(),
        passed,
        cases,
        max_slack,
        detail,
    }
}

/// Runs the cross-module property battery with deterministic seeding.
/// `random_cases` scales the randomized parts (the acceptance suite uses
/// 50). Failures land in the report instead of erroring.
pub fn run_property_suite(seed: u64, random_cases: u64) -> SuiteReport {
    let mut entries = Vec::new();

    // Squaring gadget: exact on its breakpoints, bound saturated at
    // midpoints.
    {
        let mut ok = true;
        let mut cases = 0;
        let mut slack = 0.0f64;
        for r in 1..=4u32 {
            let net = build_squaring(r).expect("r >= 1");
            let bound = pow2(-2 * (r as i64 + 1));
            for k in 0..=(1u64 << r) {
                let x = rat(k as i64, 1 << r);
                ok &= net.eval(&[x.clone()]).unwrap() == &x * &x;
                cases += 1;
            }
            let mid = rat(1, 1 << (r + 1));
            let dev = (net.eval(&[mid.clone()]).unwrap() - &mid * &mid).abs();
            ok &= dev == bound;
            slack = slack.max(to_f64(&(&bound - &dev)));
            cases += 1;
        }
        entries.push(prop("squaring breakpoint exactness", cases, slack, ok, String::new()));
    }

    // Mutation check: one flipped weight sign must break the exactness
    // property above.
    {
        let net = build_squaring(2).expect("valid");
        let mutated = flip_one_weight(&net, 1, 0, 0);
        let mut detected = false;
        for k in 0..=4i64 {
            let x = rat(k, 4);
            if mutated.eval(&[x.clone()]).unwrap() != &x * &x {
                detected = true;
            }
        }
        entries.push(prop(
            "mutation detected by exactness check",
            5,
            0.0,
            detected,
            String::new(),
        ));
    }

    // Multiplier: zero lines exact, product bound on a coarse grid.
    {
        let r = 3u32;
        let net = build_multiplier(r).expect("valid");
        let bound = rat_int(6) * pow2(-2 * (r as i64 + 1));
        let mut ok = true;
        let mut slack = f64::INFINITY;
        let mut cases = 0;
        for i in -8..=8i64 {
            let a = rat(i, 8);
            ok &= net.eval(&[a.clone(), Rat::zero()]).unwrap().is_zero();
            ok &= net.eval(&[Rat::zero(), a.clone()]).unwrap().is_zero();
            for j in -8..=8i64 {
                let b = rat(j, 8);
                let dev = (net.eval(&[a.clone(), b.clone()]).unwrap() - &a * &b).abs();
                ok &= dev <= bound;
                slack = slack.min(to_f64(&(&bound - &dev)));
                cases += 1;
            }
        }
        entries.push(prop("multiplier error bound", cases, slack, ok, String::new()));
    }

    // Weight gadgets realize random dyadic slopes exactly.
    {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ok = true;
        let mut cases = 0;
        for _ in 0..random_cases.min(20) {
            let t = 4 + rng.gen_range(0..5u32);
            let lambda = 2 + rng.gen_range(0..3u32);
            let w = round_to_multiple(
                &rat(rng.gen_range(-(1 << t)..=(1 << t)), 1 << t),
                &pow2(-(t as i64)),
            );
            let gadget = build_weight_gadget_nonlinear(&w, t, lambda).expect("valid");
            for k in -4..=4i64 {
                let x = rat(k, 4);
                ok &= gadget.net.eval(&[x.clone()]).unwrap() == &gadget.realized * &x;
                cases += 1;
            }
        }
        entries.push(prop("weight gadget exact realization", cases, 0.0, ok, String::new()));
    }

    // Trapezoid bumps: partition of unity, support, active-block count.
    {
        let big_n = 5u64;
        let blocks: Vec<QuantizedNetwork> = (0..=big_n)
            .map(|m| build_h_block(big_n, m).expect("valid"))
            .collect();
        let mut ok = true;
        let mut slack = 0.0f64;
        let mut cases = 0;
        for q in 0..=1000i64 {
            let x = rat(q, 1000);
            let vals: Vec<Rat> = blocks.iter().map(|b| b.eval(&[x.clone()]).unwrap()).collect();
            // Non-dyadic centers m/N live on the 45-bit constant grid, so
            // the sum carries a ~2^-42 wobble; 1e-9 is the contract.
            let sum: Rat = vals.iter().cloned().sum();
            let dev = to_f64(&(&sum - Rat::one())).abs();
            ok &= dev <= 1e-9;
            let active = vals
                .iter()
                .filter(|v| to_f64(&v.abs()) > 1e-9)
                .count();
            ok &= active <= 2;
            for (m, v) in vals.iter().enumerate() {
                let dist = (&x - rat(m as i64, big_n as i64)).abs();
                if dist >= rat(2, 3 * big_n as i64) {
                    ok &= to_f64(&v.abs()) <= 1e-9;
                }
            }
            slack = slack.max(dev);
            cases += 1;
        }
        entries.push(prop("partition of unity and support", cases, slack, ok, String::new()));
    }

    // f-tilde: one-sided, within 2^-t/T of f, Lipschitz-1 between
    // breakpoints of a fine scan.
    {
        let mut ok = true;
        let mut cases = 0;
        let mut slack = f64::INFINITY;
        for s in 0..random_cases {
            let f = TargetFunction::random_pwl(seed.wrapping_add(s), 7);
            let (t, big_t) = (2u32, 16u64);
            let tol = pow2(-(t as i64)) / rat_int(big_t as i64);
            let bps = ftilde_breakpoints(&f, t, big_t);
            for (i, b) in bps.iter().enumerate() {
                let fx = f.eval_exact(&[rat(i as i64, big_t as i64)]);
                let gap = b - fx;
                ok &= !gap.is_negative() && gap <= tol;
                slack = slack.min(to_f64(&(&tol - &gap)));
                cases += 1;
            }
            for w in bps.windows(2) {
                ok &= (&w[1] - &w[0]).abs() <= rat(1, big_t as i64) + &tol;
            }
        }
        entries.push(prop("companion transform one-sidedness", cases, slack, ok, String::new()));
    }

    // JSON round trip is evaluation-identical on random rational points.
    {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let net = build_multiplier(2).expect("valid");
        let back = from_json(&to_json(&net)).expect("round trip");
        let mut ok = true;
        for _ in 0..100 {
            let x = vec![rat(rng.gen_range(-64..=64), 64), rat(rng.gen_range(-64..=64), 64)];
            ok &= net.eval(&x).unwrap() == back.eval(&x).unwrap();
        }
        entries.push(prop("serialization round-trip identity", 100, 0.0, ok, String::new()));
    }

    // Memory model: negative at 2, single sign change, scan minimum at the
    // solved optimum.
    {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xb0c4d);
        let mut ok = true;
        let mut cases = 0;
        for _ in 0..random_cases.min(25) {
            let d = 10f64.powf(rng.gen_range(0.0..6.0)).round().max(1.0) as u64;
            let n = [1u64, 2, 4][rng.gen_range(0..3)];
            let eps = 2f64.powf(-rng.gen_range(1.1..20.0));
            let model = BoundModel::new(d, n, eps, 1.0);
            ok &= ms(2.0, &model) < 0.0;
            let opt = lambda_opt(&model).expect("eps < 1/2");
            let at = memory_bound(opt, &model).unwrap();
            let mut l = 2.0f64;
            let mut flips = 0;
            let mut prev = false;
            let mut first = true;
            while l <= 2f64.powi(40) {
                let pos = ms(l, &model) > 0.0;
                if !first && pos != prev {
                    flips += 1;
                }
                ok &= memory_bound(l, &model).unwrap() >= at * (1.0 - 1e-9);
                prev = pos;
                first = false;
                l *= 1.5;
            }
            ok &= flips == 1;
            cases += 1;
        }
        entries.push(prop("memory model unimodality", cases, 0.0, ok, String::new()));
    }

    let all_passed = entries.iter().all(|e| e.passed);
    SuiteReport {
        seed,
        entries,
        all_passed,
    }
}

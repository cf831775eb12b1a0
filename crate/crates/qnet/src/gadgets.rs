//! Primitive sub-network constructors.
//!
//! Everything here is exact by construction: the tent map, the
//! piecewise-linear squaring block (exact at dyadic breakpoints), absolute
//! value, the three-squares multiplier, the radix-cascade weight gadgets
//! that realize x -> w'x over nonlinear and linear codebooks, and the
//! trapezoid bump block used by the partition of unity.

use crate::assemble::{Comb, Graph, Node};
use crate::codebook::WeightCodebook;
use crate::network::QuantizedNetwork;
use crate::rational::{dyadic_frac_bits, pow2, rat, rat_int, round_to_multiple, Rat};
use num_traits::{One, Signed, Zero};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GadgetError {
    #[error("parameter out of range: {0}")]
    BadParam(String),
}

/// The two-value codebook {1/2, -1/2} used by the squaring/multiplier family.
pub fn halves_codebook() -> WeightCodebook {
    WeightCodebook::nonlinear(vec![rat(1, 2), rat(-1, 2)]).expect("valid")
}

/// Tent map g(x) = 2*sigma(x) - 4*sigma(x - 1/2): 2x on [0,1/2], 2(1-x) on
/// [1/2,1]. Input in [0,1].
pub fn build_g() -> QuantizedNetwork {
    let mut g = Graph::new(halves_codebook(), 1, true);
    let x = g.input(0);
    let u = g.relu(Comb::of(x));
    let w = g.relu(Comb::of(x).bias(rat(-1, 2)));
    g.finish(vec![Comb::new()
        .term(u, rat_int(2))
        .term(w, rat_int(-4))])
}

/// Squaring bodies run in lock step: for each input combination, builds the
/// iterated-tent construction in pre-scaled form (the running sum is kept
/// multiplied by 4 per iterate so the width stays constant) followed by the
/// halving chain. Returns, per input, a node whose value is exactly
/// 2 * s_r(input), where s_r is the piecewise-linear interpolation of the
/// square on 2^r + 1 uniform breakpoints. Consumes 3r graph levels.
pub(crate) fn squaring_columns(g: &mut Graph, inputs: &[Comb], r: u32) -> Vec<Node> {
    assert!(r >= 1);
    let half = rat(1, 2);
    let mut out = Vec::with_capacity(inputs.len());
    let mut cols: Vec<(Node, Node, Node)> = inputs
        .iter()
        .map(|c| {
            let u = g.relu(c.clone());
            let w = g.relu(c.clone().bias(-half.clone()));
            let a = g.relu(c.clone().scaled(&rat_int(4)));
            (u, w, a)
        })
        .collect();
    for _ in 2..=r {
        for (u, w, a) in &mut cols {
            // tent of the previous iterate: g = 2u - 4w
            let tent = Comb::new().term(*u, rat_int(2)).term(*w, rat_int(-4));
            let nu = g.relu(tent.clone());
            let nw = g.relu(tent.bias(-half.clone()));
            // a' = 4a - 4*(2u - 4w): the pre-scaled running sum
            let na = g.relu(
                Comb::new()
                    .term(*a, rat_int(4))
                    .term(*u, rat_int(-8))
                    .term(*w, rat_int(16)),
            );
            (*u, *w, *a) = (nu, nw, na);
        }
    }
    for (u, w, a) in cols {
        // b = a - (2u - 4w) = 2^{2r} * s_r(input), then halve 2r - 1 times.
        let mut b = g.relu(
            Comb::new()
                .term(a, rat_int(1))
                .term(u, rat_int(-2))
                .term(w, rat_int(4)),
        );
        for _ in 1..(2 * r) {
            b = g.relu(Comb::of(b).scaled(&half));
        }
        out.push(b);
    }
    out
}

/// Piecewise-linear squaring on [0,1]: exact at every breakpoint k/2^r,
/// error at most 2^{-2(r+1)} (attained at interval midpoints). Constant
/// width in r.
pub fn build_squaring(r: u32) -> Result<QuantizedNetwork, GadgetError> {
    if r < 1 {
        return Err(GadgetError::BadParam("squaring requires r >= 1".into()));
    }
    let mut g = Graph::new(halves_codebook(), 1, true);
    let x = g.input(0);
    let cols = squaring_columns(&mut g, &[Comb::of(x)], r);
    Ok(g.finish(vec![Comb::of(cols[0]).scaled(&rat(1, 2))]))
}

/// Debug variant computing x - sum_i 2^{-2i} g_i(x) term by term, with one
/// halving chain per tent iterate. Width grows linearly in r; used for
/// differential testing against the constant-width builder.
pub fn build_squaring_naive(r: u32) -> Result<QuantizedNetwork, GadgetError> {
    if r < 1 {
        return Err(GadgetError::BadParam("squaring requires r >= 1".into()));
    }
    let half = rat(1, 2);
    let mut g = Graph::new(halves_codebook(), 1, true);
    let x = g.input(0);
    let xpass = g.relu(Comb::of(x));
    let mut u = g.relu(Comb::of(x));
    let mut w = g.relu(Comb::of(x).bias(-half.clone()));
    let mut out = Comb::of(xpass);
    for i in 1..=r {
        let tent = Comb::new().term(u, rat_int(2)).term(w, rat_int(-4));
        // The i-th tent iterate heads its own halving chain of length 2i,
        // turning it into the 2^{-2i}-scaled term of the sum.
        let gi = g.relu(tent.clone());
        let mut c = gi;
        for _ in 0..(2 * i) {
            c = g.relu(Comb::of(c).scaled(&half));
        }
        out = out.term(c, rat_int(-1));
        if i < r {
            u = gi;
            w = g.relu(tent.bias(-half.clone()));
        }
    }
    Ok(g.finish(vec![out]))
}

/// |x| on [-1,1] via half-scaled branches recombined with multiplicity.
pub fn build_abs() -> QuantizedNetwork {
    let mut g = Graph::new(halves_codebook(), 1, false);
    let x = g.input(0);
    let p = g.relu(Comb::of(x).scaled(&rat(1, 2)));
    let q = g.relu(Comb::of(x).scaled(&rat(-1, 2)));
    g.finish(vec![Comb::new()
        .term(p, rat_int(2))
        .term(q, rat_int(2))])
}

/// Approximate product on [-1,1]^2 from three squaring bodies:
/// 2(s_r(|x+y|/2) - s_r(|x|/2) - s_r(|y|/2)). Exactly zero whenever either
/// input is zero; error at most 6 * 2^{-2(r+1)}.
pub fn build_multiplier(r: u32) -> Result<QuantizedNetwork, GadgetError> {
    if r < 1 {
        return Err(GadgetError::BadParam("multiplier requires r >= 1".into()));
    }
    let mut g = Graph::new(halves_codebook(), 2, false);
    let (x, y) = (g.input(0), g.input(1));
    let out = mult_comb(&mut g, &Comb::of(x), &Comb::of(y), r);
    Ok(g.finish(vec![out]))
}

/// Appends one approximate-product block for two combinations with values
/// in [-1,1]: ReLU pairs compute the three half-scaled absolute values,
/// three squaring bodies run in lock step, and the returned combination is
/// 2(s_r(|a+b|/2) - s_r(|a|/2) - s_r(|b|/2)).
pub(crate) fn mult_comb(g: &mut Graph, a: &Comb, b: &Comb, r: u32) -> Comb {
    let half = rat(1, 2);
    let neg_half = rat(-1, 2);
    let pair = |g: &mut Graph, c: Comb| {
        let p = g.relu(c.clone().scaled(&half));
        let q = g.relu(c.scaled(&neg_half));
        Comb::of(p).add(&Comb::of(q))
    };
    let sum_abs = pair(g, a.clone().add(b));
    let a_abs = pair(g, a.clone());
    let b_abs = pair(g, b.clone());
    let cols = squaring_columns(g, &[sum_abs, a_abs, b_abs], r);
    // Each column carries 2 * s_r, so 2(A - B - C) needs plain +-1.
    Comb::new()
        .term(cols[0], rat_int(1))
        .term(cols[1], rat_int(-1))
        .term(cols[2], rat_int(-1))
}

/// Smallest integer radix rho >= 2 with rho^(lambda-1) >= t, and the
/// effective resolution rho^(lambda-1) actually delivered.
pub fn radix_for(t: u32, lambda: u32) -> Result<(u32, u32), GadgetError> {
    if lambda < 2 {
        return Err(GadgetError::BadParam("lambda must be >= 2".into()));
    }
    if t < 2 {
        return Err(GadgetError::BadParam("t must be >= 2".into()));
    }
    let mut rho: u32 = 2;
    loop {
        let eff = (rho as u128).checked_pow(lambda - 1).filter(|&e| e < 1 << 30);
        match eff {
            Some(e) if e >= t as u128 => return Ok((rho, e as u32)),
            Some(_) => rho += 1,
            None => {
                return Err(GadgetError::BadParam(format!(
                    "effective resolution overflows for t={t}, lambda={lambda}"
                )))
            }
        }
    }
}

/// Codebook {-1/2} followed by W = {2^-1, 2^-rho, 2^-rho^2, ...,
/// 2^-rho^(lambda-2)}.
pub fn nonlinear_codebook(lambda: u32, rho: u32) -> WeightCodebook {
    let mut values = vec![rat(-1, 2)];
    let mut e: i64 = 1;
    for _ in 0..(lambda - 1) {
        values.push(pow2(-e));
        e *= rho as i64;
    }
    WeightCodebook::nonlinear(values).expect("distinct by construction")
}

/// Result of a weight-gadget build: the network plus resolution metadata.
#[derive(Debug)]
pub struct WeightGadget {
    pub net: QuantizedNetwork,
    pub requested_t: u32,
    pub effective_t: u32,
    pub rho: u32,
    /// The realized slope w': the multiple of 2^-effective_t nearest to w
    /// (ties toward zero).
    pub realized: Rat,
}

/// Applies the factor 2^-e to `start` through a chain of single-edge units,
/// one codebook factor per level, following the radix-rho digit expansion
/// of e. Returns the chain end (equal to `start` when e = 0).
fn factor_chain(g: &mut Graph, start: Node, e: u64, rho: u32, lambda: u32) -> Node {
    let mut cur = start;
    let mut rem = e;
    let mut exp: u64 = 1; // rho^k
    for _ in 0..(lambda - 1) {
        let digit = rem % rho as u64;
        rem /= rho as u64;
        for _ in 0..digit {
            cur = g.relu(Comb::of(cur).scaled(&pow2(-(exp as i64))));
        }
        exp *= rho as u64;
    }
    debug_assert_eq!(rem, 0);
    cur
}

/// Applies the slope `wp` (a dyadic multiple of 2^-rho^(lambda-1) in
/// [-1,1]) to an arbitrary combination over the nonlinear radix codebook.
/// ReLU gates split the two signs; each binary digit of |wp| gets a factor
/// chain per sign branch. Returns the combination representing wp * input.
pub(crate) fn cascade_apply_nonlinear(
    g: &mut Graph,
    input: &Comb,
    wp: &Rat,
    rho: u32,
    lambda: u32,
) -> Comb {
    let sign = if wp.is_negative() { rat_int(-1) } else { rat_int(1) };
    let absw = wp.abs();
    if wp.is_zero() {
        // "Empty" gadget: contributes nothing.
        return Comb::new();
    }
    if absw == Rat::one() {
        let p = g.relu(input.clone().scaled(&rat(1, 2)));
        let q = g.relu(input.clone().scaled(&rat(-1, 2)));
        return Comb::new()
            .term(p, rat_int(2))
            .term(q, rat_int(-2))
            .scaled(&sign);
    }
    let gp = g.relu(input.clone().scaled(&rat(1, 2)));
    let gq = g.relu(input.clone().scaled(&rat(-1, 2)));
    let mut comb = Comb::new();
    for j in dyadic_frac_bits(&absw) {
        let ep = factor_chain(g, gp, j - 1, rho, lambda);
        let eq = factor_chain(g, gq, j - 1, rho, lambda);
        comb = comb.term(ep, sign.clone()).term(eq, -sign.clone());
    }
    comb
}

/// x -> w'x for all x in [-1,1] over the nonlinear radix codebook, where w'
/// is the multiple of 2^-effective_t nearest to w. ReLU gates split the two
/// signs; each binary digit of |w'| gets a factor chain per sign branch.
pub fn build_weight_gadget_nonlinear(
    w: &Rat,
    t: u32,
    lambda: u32,
) -> Result<WeightGadget, GadgetError> {
    if w.abs() > Rat::one() {
        return Err(GadgetError::BadParam("|w| must be <= 1".into()));
    }
    let (rho, t_eff) = radix_for(t, lambda)?;
    let wp = round_to_multiple(w, &pow2(-(t_eff as i64)));
    let book = nonlinear_codebook(lambda, rho);
    let mut g = Graph::new(book, 1, false);
    let x = g.input(0);
    let out = cascade_apply_nonlinear(&mut g, &Comb::of(x), &wp, rho, lambda);
    Ok(WeightGadget {
        net: g.finish(vec![out]),
        requested_t: t,
        effective_t: t_eff,
        rho,
        realized: wp,
    })
}

/// Linear-codebook counterpart of [`cascade_apply_nonlinear`]: applies the
/// slope `wp` (a dyadic multiple of 2^-t) to an arbitrary combination. Each
/// binary digit of |wp| is a chain of exactly ceil(t / log2 lambda) - 1
/// power-of-two factor units, with the leftover power of two folded into
/// the combination coefficient.
pub(crate) fn cascade_apply_linear(
    g: &mut Graph,
    input: &Comb,
    wp: &Rat,
    t: u32,
    lambda: u64,
) -> Comb {
    let big_l = lambda.trailing_zeros() as u64; // log2 lambda
    let chain_units = (t as u64).div_ceil(big_l) - 1;
    let sign = if wp.is_negative() { rat_int(-1) } else { rat_int(1) };
    let absw = wp.abs();
    if wp.is_zero() {
        return Comb::new();
    }
    if absw == Rat::one() {
        let p = g.relu(input.clone().scaled(&rat(1, 2)));
        let q = g.relu(input.clone().neg());
        return Comb::new()
            .term(p, rat_int(2))
            .term(q, rat_int(-1))
            .scaled(&sign);
    }
    let gp = g.relu(input.clone().scaled(&rat(1, 2))); // in/2 on in >= 0
    let gq = g.relu(input.clone().neg()); // |in| on in <= 0
    let chain = |g: &mut Graph, start: Node, mut rem: u64| -> (Node, u64) {
        let mut cur = start;
        for _ in 0..chain_units {
            let step = rem.min(big_l);
            let f = if step == 0 { Rat::one() } else { pow2(-(step as i64)) };
            cur = g.relu(Comb::of(cur).scaled(&f));
            rem -= step;
        }
        debug_assert!(rem <= big_l);
        (cur, rem)
    };
    let mut comb = Comb::new();
    for j in dyadic_frac_bits(&absw) {
        let (ep, rp) = chain(g, gp, j - 1);
        let (eq, rq) = chain(g, gq, j);
        comb = comb
            .term(ep, sign.clone() * pow2(-(rp as i64)))
            .term(eq, -sign.clone() * pow2(-(rq as i64)));
    }
    comb
}

/// x -> w'x over the linear codebook {-1, 1/lambda, ..., (lambda-1)/lambda}
/// with lambda a power of two. Each binary digit of |w'| is a chain of
/// exactly ceil(t / log2 lambda) - 1 factor units (power-of-two codebook
/// entries), with the leftover power of two folded into the combination
/// coefficient, so the cascade depth is ceil(t / log2 lambda) + 1.
pub fn build_weight_gadget_linear(
    w: &Rat,
    t: u32,
    lambda: u64,
) -> Result<WeightGadget, GadgetError> {
    if w.abs() > Rat::one() {
        return Err(GadgetError::BadParam("|w| must be <= 1".into()));
    }
    if t < 1 {
        return Err(GadgetError::BadParam("t must be >= 1".into()));
    }
    let book = WeightCodebook::linear(lambda)
        .map_err(|e| GadgetError::BadParam(e.to_string()))?;
    let wp = round_to_multiple(w, &pow2(-(t as i64)));
    let mut g = Graph::new(book, 1, false);
    let x = g.input(0);
    let out = cascade_apply_linear(&mut g, &Comb::of(x), &wp, t, lambda);
    Ok(WeightGadget {
        net: g.finish(vec![out]),
        requested_t: t,
        effective_t: t,
        rho: 2,
        realized: wp,
    })
}

/// Precision, in bits, of the dyadic approximations used for constants that
/// the codebook cannot express exactly (such as m/N). The induced output
/// perturbations are orders of magnitude below every certified tolerance.
pub const CONST_BITS: u32 = 45;

/// A node holding the constant `value` (nonnegative, at most 1), built from
/// the bias unit: the binary digits of the fractional part are folded in
/// LSB-first through halving units. `value` is rounded to CONST_BITS bits.
/// Returns None for zero.
pub(crate) fn const_node(g: &mut Graph, value: &Rat) -> Option<Node> {
    assert!(!value.is_negative() && value <= &Rat::one());
    let v = round_to_multiple(value, &pow2(-(CONST_BITS as i64)));
    if v.is_zero() {
        return None;
    }
    if v.is_one() {
        return Some(g.relu(Comb::new().bias(Rat::one())));
    }
    let bits = dyadic_frac_bits(&v);
    let deepest = *bits.last().expect("nonzero");
    let half = rat(1, 2);
    let mut cur: Option<Node> = None;
    for i in (1..=deepest).rev() {
        let mut c = Comb::new();
        if let Some(n) = cur {
            c = c.term(n, half.clone());
        }
        if bits.contains(&i) {
            c = c.bias(half.clone());
        }
        if !c.is_zero() {
            cur = Some(g.relu(c));
        }
    }
    cur
}

/// k * z for a nonnegative combination z and integer k >= 1, via an
/// MSB-first doubling chain (weights O(log k) instead of O(k)).
pub(crate) fn scale_by_int(g: &mut Graph, z: &Comb, k: u64) -> Comb {
    assert!(k >= 1);
    if k <= 2 {
        return z.clone().scaled(&rat_int(k as i64));
    }
    let nbits = 64 - k.leading_zeros();
    let mut acc: Option<Node> = None;
    for i in (0..nbits).rev() {
        let bit = (k >> i) & 1 == 1;
        let mut c = Comb::new();
        if let Some(n) = acc {
            c = c.term(n, rat_int(2));
        }
        if bit {
            c = c.add(z);
        }
        acc = Some(g.relu(c));
    }
    Comb::of(acc.expect("k >= 1"))
}

/// Trapezoid bump 1 - sigma(u - 1) + sigma(u - 2) evaluated at
/// u = 3N |x - center|, appended to `g`. Exactly 1 when |x - center| is at
/// most 1/(3N) and exactly 0 from 2/(3N) on.
pub(crate) fn h_block_comb(g: &mut Graph, x: Node, center: &Rat, n_grid: u64) -> Comb {
    let mu = const_node(g, center);
    h_block_with_node(g, x, mu, n_grid)
}

/// As [`h_block_comb`], but taking an already-built (shared) center node.
pub(crate) fn h_block_with_node(
    g: &mut Graph,
    x: Node,
    mu: Option<Node>,
    n_grid: u64,
) -> Comb {
    let mut up = Comb::of(x);
    let mut uq = Comb::of(x).neg();
    if let Some(mu) = mu {
        up = up.term(mu, rat_int(-1));
        uq = uq.term(mu, rat_int(1));
    }
    let p = g.relu(up);
    let q = g.relu(uq);
    let z = Comb::of(p).add(&Comb::of(q)); // |x - center|
    let u = scale_by_int(g, &z, 3 * n_grid);
    let a = g.relu(u.clone().bias(rat_int(-1)));
    let b = g.relu(u.bias(rat_int(-2)));
    Comb::new()
        .bias(Rat::one())
        .term(a, rat_int(-1))
        .term(b, rat_int(1))
}

/// Standalone trapezoid block h(3N x - 3 m_k) for x in [0,1].
pub fn build_h_block(n_grid: u64, m_k: u64) -> Result<QuantizedNetwork, GadgetError> {
    if n_grid < 1 || m_k > n_grid {
        return Err(GadgetError::BadParam(format!(
            "need N >= 1 and 0 <= m_k <= N, got N={n_grid}, m_k={m_k}"
        )));
    }
    let mut g = Graph::new(halves_codebook(), 1, true);
    let x = g.input(0);
    let center = rat(m_k as i64, n_grid as i64);
    let out = h_block_comb(&mut g, x, &center, n_grid);
    Ok(g.finish(vec![out]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::rat_int;
    use num_traits::ToPrimitive;

    /// Closed-form tent map.
    fn tent(x: &Rat) -> Rat {
        if x < &rat(1, 2) {
            x * rat_int(2)
        } else {
            (Rat::one() - x) * rat_int(2)
        }
    }

    /// Piecewise-linear interpolation of x^2 on 2^r + 1 uniform breakpoints,
    /// written without reference to any network.
    fn interp_square(x: &Rat, r: u32) -> Rat {
        let steps = rat_int(1i64 << r);
        let k = (x * &steps).floor();
        let lo = &k / &steps;
        let hi = (&k + Rat::one()) / &steps;
        if x == &lo {
            return &lo * &lo;
        }
        let (lo2, hi2) = (&lo * &lo, &hi * &hi);
        &lo2 + (x - &lo) * (&hi2 - &lo2) / (&hi - &lo)
    }

    /// Closed-form trapezoid.
    fn trapezoid(u: &Rat) -> Rat {
        let a = u.abs();
        if a <= Rat::one() {
            Rat::one()
        } else if a < rat_int(2) {
            rat_int(2) - a
        } else {
            Rat::zero()
        }
    }

    #[test]
    fn tent_block_matches_closed_form() {
        let net = build_g();
        assert!(net.validate().is_empty());
        for (num, den) in [(0i64, 1i64), (1, 1), (1, 2), (3, 8), (2, 7), (9, 10)] {
            let x = rat(num, den);
            assert_eq!(net.eval(&[x.clone()]).unwrap(), tent(&x), "g({num}/{den})");
        }
    }

    #[test]
    fn squaring_exact_at_breakpoints() {
        for r in 1..=6u32 {
            let net = build_squaring(r).unwrap();
            assert!(net.validate().is_empty());
            for k in 0..=(1i64 << r) {
                let x = rat(k, 1 << r);
                assert_eq!(
                    net.eval(&[x.clone()]).unwrap(),
                    &x * &x,
                    "r={r}, k={k}"
                );
            }
        }
    }

    #[test]
    fn squaring_matches_interpolation_oracle_and_saturates_bound() {
        // Off-breakpoint values follow the interpolant; the worst error is
        // exactly 2^-2(r+1), attained at interval midpoints.
        for r in 1..=4u32 {
            let net = build_squaring(r).unwrap();
            let denom = 1i64 << (r + 2);
            let mut worst = Rat::zero();
            for k in 0..=denom {
                let x = rat(k, denom);
                let got = net.eval(&[x.clone()]).unwrap();
                assert_eq!(got, interp_square(&x, r), "r={r}, x={k}/{denom}");
                let err = (&got - &x * &x).abs();
                if err > worst {
                    worst = err;
                }
            }
            assert_eq!(worst, pow2(-2 * (r as i64 + 1)), "r={r}");
        }
    }

    #[test]
    fn squaring_width_is_constant_and_depth_affine() {
        let mut widths = Vec::new();
        for r in 1..=10u32 {
            let c = build_squaring(r).unwrap().complexity();
            assert_eq!(c.depth, 3 * r as usize + 1);
            widths.push(c.max_width);
        }
        // Bounded by a constant independent of r (4 = three lanes + bias).
        assert!(widths.iter().all(|&w| w <= 4), "widths {widths:?}");
    }

    #[test]
    fn naive_variant_agrees_with_prescale() {
        for r in 1..=4u32 {
            let a = build_squaring(r).unwrap();
            let b = build_squaring_naive(r).unwrap();
            assert!(b.validate().is_empty());
            for k in 0..=48i64 {
                let x = rat(k, 48);
                assert_eq!(
                    a.eval(&[x.clone()]).unwrap(),
                    b.eval(&[x]).unwrap(),
                    "r={r}, k={k}"
                );
            }
            // The naive body really is wider for larger r.
            if r >= 4 {
                assert!(b.complexity().max_width > a.complexity().max_width);
            }
        }
    }

    #[test]
    fn abs_block_is_exact() {
        let net = build_abs();
        assert!(net.validate().is_empty());
        for (num, den) in [(-73i64, 100i64), (0, 1), (1, 1), (-1, 1), (5, 9)] {
            let x = rat(num, den);
            assert_eq!(net.eval(&[x.clone()]).unwrap(), x.abs());
        }
    }

    #[test]
    fn multiplier_zero_annihilates_exactly() {
        let net = build_multiplier(6).unwrap();
        assert!(net.validate().is_empty());
        for (num, den) in [(1i64, 2i64), (-3, 7), (1, 1), (9, 10)] {
            let v = rat(num, den);
            assert_eq!(net.eval(&[v.clone(), Rat::zero()]).unwrap(), Rat::zero());
            assert_eq!(net.eval(&[Rat::zero(), v]).unwrap(), Rat::zero());
        }
        assert!(net.eval_f64(&[0.0, 0.37]).unwrap().abs() == 0.0);
    }

    #[test]
    fn multiplier_breakpoint_hit_is_exact() {
        // r=2, x=y=1/2: all three squaring inputs (1/2, 1/4, 1/4) are
        // breakpoints of the r=2 interpolant, so the product is exact.
        let net = build_multiplier(2).unwrap();
        assert_eq!(
            net.eval(&[rat(1, 2), rat(1, 2)]).unwrap(),
            rat(1, 4)
        );
    }

    #[test]
    fn multiplier_symmetric_and_within_bound_on_coarse_grid() {
        for r in [2u32, 4] {
            let net = build_multiplier(r).unwrap();
            let bound = pow2(-2 * (r as i64 + 1)) * rat_int(6);
            let n = 16i64;
            for i in -n..=n {
                for j in i..=n {
                    let (x, y) = (rat(i, n), rat(j, n));
                    let a = net.eval(&[x.clone(), y.clone()]).unwrap();
                    let b = net.eval(&[y.clone(), x.clone()]).unwrap();
                    assert_eq!(a, b, "symmetry at ({i},{j})/{n}");
                    assert!(
                        (&a - &x * &y).abs() <= bound,
                        "error bound at ({i},{j})/{n}, r={r}"
                    );
                }
            }
        }
    }

    #[test]
    fn radix_rounding_records_effective_resolution() {
        assert_eq!(radix_for(9, 2).unwrap(), (9, 9));
        assert_eq!(radix_for(9, 3).unwrap(), (3, 9));
        assert_eq!(radix_for(5, 3).unwrap(), (3, 9)); // rounded up
        assert_eq!(radix_for(4, 4).unwrap(), (2, 8));
        assert_eq!(radix_for(16, 4).unwrap(), (3, 27));
        assert!(radix_for(4, 1).is_err());
    }

    #[test]
    fn nonlinear_gadget_special_cases() {
        // w = 0: the empty gadget.
        let z = build_weight_gadget_nonlinear(&Rat::zero(), 4, 2).unwrap();
        assert!(z.net.validate().is_empty());
        assert_eq!(z.net.eval(&[rat(3, 4)]).unwrap(), Rat::zero());
        // w = 1: exact identity on both signs.
        let one = build_weight_gadget_nonlinear(&Rat::one(), 4, 2).unwrap();
        assert_eq!(one.net.eval(&[rat(-2, 3)]).unwrap(), rat(-2, 3));
        assert_eq!(one.net.eval(&[rat(2, 3)]).unwrap(), rat(2, 3));
        // lambda=2, t=3, w=0.3: nearest multiple of 1/8 is 1/4.
        let g = build_weight_gadget_nonlinear(&rat(3, 10), 3, 2).unwrap();
        assert_eq!(g.realized, rat(1, 4));
        assert_eq!(g.net.eval(&[rat(-1, 2)]).unwrap(), rat(-1, 8));
    }

    #[test]
    fn nonlinear_gadget_is_odd_and_homogeneous() {
        let g = build_weight_gadget_nonlinear(&rat(-5, 8), 9, 3).unwrap();
        assert_eq!(g.effective_t, 9);
        for k in 0..=8i64 {
            let x = rat(k, 8);
            let pos = g.net.eval(&[x.clone()]).unwrap();
            let neg = g.net.eval(&[-x.clone()]).unwrap();
            assert_eq!(neg, -pos.clone(), "odd symmetry at {k}/8");
            assert_eq!(pos, &g.realized * &x, "slope at {k}/8");
        }
    }

    #[test]
    fn nonlinear_gadget_meets_prop3_counts() {
        for (lambda, t) in [(2u32, 4u32), (2, 9), (2, 16), (3, 9), (3, 16), (4, 16)] {
            // Worst-case slope: all bits set.
            let (_, te) = radix_for(t, lambda).unwrap();
            let w = Rat::one() - pow2(-(te as i64));
            let g = build_weight_gadget_nonlinear(&w, t, lambda).unwrap();
            let (rho, te2) = (g.rho as u64, g.effective_t as u64);
            assert_eq!(te as u64, te2);
            let c = g.net.complexity();
            let depth_bound = (lambda as u64) * (rho - 1) + 1;
            let weight_bound = 4 * te2 * lambda as u64 * (rho - 1) + 8 * te2 + 4;
            assert!(
                c.depth as u64 <= depth_bound,
                "depth {} > {depth_bound} for lambda={lambda}, t={t}",
                c.depth
            );
            assert!(
                c.weight_count <= weight_bound,
                "weights {} > {weight_bound} for lambda={lambda}, t={t}",
                c.weight_count
            );
        }
    }

    #[test]
    fn linear_gadget_examples() {
        // Codebook member: exact.
        let g = build_weight_gadget_linear(&rat(-1, 2), 1, 2).unwrap();
        assert_eq!(g.net.eval(&[rat(2, 3)]).unwrap(), rat(-1, 3));
        assert_eq!(g.net.eval(&[rat(-2, 3)]).unwrap(), rat(1, 3));
        // lambda=4, t=4, w=5/16 is on the grid already.
        let g = build_weight_gadget_linear(&rat(5, 16), 4, 4).unwrap();
        assert_eq!(g.realized, rat(5, 16));
        assert_eq!(g.net.eval(&[rat_int(1)]).unwrap(), rat(5, 16));
        assert_eq!(g.net.eval(&[rat_int(-1)]).unwrap(), rat(-5, 16));
        // Depth formula: lambda=16, t=12 -> at most 12/4 + 1 = 4.
        let g = build_weight_gadget_linear(&rat(1365, 4096), 12, 16).unwrap();
        assert!(g.net.complexity().depth <= 4, "depth {}", g.net.complexity().depth);
        assert_eq!(g.net.eval(&[rat_int(1)]).unwrap(), rat(1365, 4096));
        assert!(g.net.validate().is_empty());
    }

    #[test]
    fn linear_gadget_rejects_bad_lambda() {
        assert!(build_weight_gadget_linear(&rat(1, 2), 4, 3).is_err());
        assert!(build_weight_gadget_linear(&rat(3, 2), 4, 4).is_err());
    }

    #[test]
    fn h_block_matches_trapezoid_oracle() {
        let (n_grid, m_k) = (4u64, 2u64);
        let net = build_h_block(n_grid, m_k).unwrap();
        assert!(net.validate().is_empty());
        let center = rat(m_k as i64, n_grid as i64);
        for k in 0..=64i64 {
            let x = rat(k, 64);
            let u = (&x - &center) * rat_int(3 * n_grid as i64);
            let got = net.eval(&[x.clone()]).unwrap();
            let want = trapezoid(&u);
            // m/N = 1/2 is dyadic here, so the block is exact.
            assert_eq!(got, want, "x={k}/64");
        }
    }

    #[test]
    fn h_block_with_nondyadic_center_is_close() {
        // N=3, m=1: center 1/3 needs the 45-bit constant chain.
        let net = build_h_block(3, 1).unwrap();
        assert!(net.validate().is_empty());
        let center = rat(1, 3);
        let tol = rat(9, 1) * pow2(-44); // 3N * 2^-(CONST_BITS-1)
        for k in 0..=60i64 {
            let x = rat(k, 60);
            let u = (&x - &center) * rat_int(9);
            let err = (net.eval(&[x.clone()]).unwrap() - trapezoid(&u)).abs();
            assert!(err <= tol, "x={k}/60, err={}", err.to_f64().unwrap());
        }
        // Peak and support endpoints.
        assert!(net.eval(&[rat(1, 3)]).unwrap() <= Rat::one());
        assert_eq!(net.eval(&[Rat::one()]).unwrap(), Rat::zero());
    }

    #[test]
    fn const_node_and_int_scaler() {
        let mut g = Graph::new(halves_codebook(), 1, true);
        let c = const_node(&mut g, &rat(5, 16)).unwrap();
        let x = g.input(0);
        let xp = g.relu(Comb::of(x));
        let scaled = scale_by_int(&mut g, &Comb::of(xp), 13);
        let net = g.finish(vec![Comb::of(c), scaled]);
        let out = net.eval_vec(&[rat(1, 7)]).unwrap();
        assert_eq!(out[0], rat(5, 16));
        assert_eq!(out[1], rat(13, 7));
    }
}

use serde::{Deserialize, Serialize};

use crate::budget::accounting::{eps3, grouped_costs, k3_shortcut, log2_a, net_key_length, tag_failure, Costs, FailureBudget};
use crate::error::{Error, Result};
use crate::phase::{h2, log2_p_theta_bound, p_theta_bound};
use crate::privamp::phase_entropy;

fn default_f() -> f64 {
    1.0
}

fn default_retries() -> u32 {
    3
}

/// Tunables and calibration estimates for one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolParams {
    /// Pulses sent by Alice.
    pub pulses: u64,
    /// Channel transmittance including detector efficiency.
    pub eta: f64,
    /// Calibrated X-basis bit error rate.
    pub e_bx: f64,
    /// Calibrated Z-basis bit error rate.
    pub e_bz: f64,
    pub eps_target: f64,
    /// Probability that either party picks the X basis.
    pub p_x: f64,
    /// Error-correction efficiency: leakage is `f_ec n H2(e)`.
    #[serde(default = "default_f")]
    pub f_ec: f64,
    /// Let the planner choose `p_x` instead of using the configured value.
    #[serde(default)]
    pub optimize_p_x: bool,
    #[serde(default)]
    pub k_bs: Option<u64>,
    #[serde(default)]
    pub k_ev: Option<u64>,
    #[serde(default)]
    pub k_pa: Option<u64>,
    /// Error-correction attempts after a failed verification.
    #[serde(default = "default_retries")]
    pub max_ec_retries: u32,
}

impl ProtocolParams {
    /// Defaults used by the examples: 4% error in both bases, `eps = 1e-7`.
    pub fn example(pulses: u64, eta: f64) -> Self {
        ProtocolParams {
            pulses,
            eta,
            e_bx: 0.04,
            e_bz: 0.04,
            eps_target: 1e-7,
            p_x: 0.5,
            f_ec: 1.0,
            optimize_p_x: true,
            k_bs: None,
            k_ev: None,
            k_pa: None,
            max_ec_retries: 3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Domain(msg));
        if self.pulses == 0 {
            return bad("pulses must be positive".into());
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return bad(format!("eta = {} outside (0, 1]", self.eta));
        }
        for (name, e) in [("e_bx", self.e_bx), ("e_bz", self.e_bz)] {
            if !(0.0..=0.5).contains(&e) {
                return bad(format!("{name} = {e} outside [0, 0.5]"));
            }
        }
        if !(self.eps_target > 0.0 && self.eps_target < 1.0) {
            return bad(format!("eps_target = {} outside (0, 1)", self.eps_target));
        }
        if !(self.p_x > 0.0 && self.p_x < 1.0) {
            return bad(format!("p_x = {} outside (0, 1)", self.p_x));
        }
        if !(self.f_ec > 0.0 && self.f_ec.is_finite()) {
            return bad(format!("f_ec = {} must be positive", self.f_ec));
        }
        Ok(())
    }

    pub fn expected_detections(&self) -> f64 {
        self.pulses as f64 * self.eta
    }
}

/// Statistics known exactly after error correction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observed {
    /// Detections entering the basis sift.
    pub n: u64,
    pub n_x: u64,
    pub n_z: u64,
    pub e_bx: f64,
    pub e_bz: f64,
    /// Encrypted error-correction bits actually spent.
    pub k_ec: u64,
    /// Basis-sift tag length already committed to.
    pub k_bs: Option<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum PlanInput {
    /// Before the run: `n` detections expected, sifted sizes from `p_x`.
    Expected { n: f64 },
    Observed(Observed),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanResult {
    pub p_x: f64,
    pub q_x: f64,
    pub n: f64,
    pub n_x: f64,
    pub n_z: f64,
    pub e_bx: f64,
    pub e_bz: f64,
    pub theta_x: f64,
    pub theta_z: f64,
    pub p_theta_x: f64,
    pub p_theta_z: f64,
    /// X-basis bits enter the final key.
    pub use_x: bool,
    pub use_z: bool,
    pub costs: Costs,
    /// Realised `2 k_bs + k_ev + k_pa + t_oe`.
    pub k3: u64,
    pub k3_target: u64,
    /// Phase-estimation budget handed to the `theta` search.
    pub eps_ph_budget: f64,
    /// Amplification input length.
    pub pa_input: f64,
    pub l: u64,
    pub net_key: i64,
    pub budget: FailureBudget,
    pub feasible: bool,
    pub diagnostics: Vec<String>,
}

/// Real-valued key length before error-correction rounding:
/// `sum_b n_b (1 - f H2(e_b) - H2(e_b' + theta_b')) - k3`, where a basis
/// whose bracket is negative contributes nothing.
pub fn key_length_estimate(n_x: f64, n_z: f64, e_bx: f64, e_bz: f64, theta_x: f64, theta_z: f64, f: f64, k3: f64) -> f64 {
    let bx = 1.0 - f * h2(e_bx) - phase_entropy(e_bz + theta_z);
    let bz = 1.0 - f * h2(e_bz) - phase_entropy(e_bx + theta_x);
    n_x * bx.max(0.0) + n_z * bz.max(0.0) - k3
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Config {
    Both,
    XOnly,
    ZOnly,
}

impl Config {
    fn uses(self) -> (bool, bool) {
        match self {
            Config::Both => (true, true),
            Config::XOnly => (true, false),
            Config::ZOnly => (false, true),
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct Stats {
    n: f64,
    n_x: f64,
    n_z: f64,
    e_bx: f64,
    e_bz: f64,
    /// Weight of the error-correction term; zero once that cost is sunk.
    f: f64,
}

#[derive(Clone, Copy, Debug)]
struct Choice {
    config: Config,
    theta_x: f64,
    theta_z: f64,
    value: f64,
}

/// Smallest deviation whose tail bound is at most `2^log2_target`, searched
/// below the point where the phase entropy saturates.
fn theta_for(n_s: f64, n_t: f64, e_s: f64, log2_target: f64) -> Option<f64> {
    let cap = 0.5 - e_s;
    if cap <= 0.0 || n_s < 1.0 || n_t < 1.0 {
        return None;
    }
    let f = |t: f64| log2_p_theta_bound(n_s, n_t, e_s, t).unwrap_or(0.0);
    if f(cap) > log2_target {
        return None;
    }
    let (mut lo, mut hi) = (0.0, cap);
    for _ in 0..90 {
        let mid = 0.5 * (lo + hi);
        if f(mid) <= log2_target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(hi)
}

fn value(s: &Stats, config: Config, theta_x: f64, theta_z: f64) -> f64 {
    let (ux, uz) = config.uses();
    let bx = 1.0 - s.f * h2(s.e_bx) - phase_entropy(s.e_bz + theta_z);
    let bz = 1.0 - s.f * h2(s.e_bz) - phase_entropy(s.e_bx + theta_x);
    (if ux { s.n_x * bx } else { 0.0 }) + (if uz { s.n_z * bz } else { 0.0 })
}

/// Maximiser of a unimodal-ish function: coarse scan, then golden section
/// around the best grid point.
fn maximize<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, steps: usize, iters: usize) -> (f64, f64) {
    let h = (hi - lo) / steps as f64;
    let (mut bx, mut bv) = (lo, f(lo));
    for i in 1..=steps {
        let x = lo + h * i as f64;
        let v = f(x);
        if v > bv {
            bx = x;
            bv = v;
        }
    }
    if bv == f64::NEG_INFINITY {
        return (bx, bv);
    }
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = ((bx - h).max(lo), (bx + h).min(hi));
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..iters {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    for (x, v) in [(c, fc), (d, fd)] {
        if v > bv {
            bx = x;
            bv = v;
        }
    }
    (bx, bv)
}

fn best_choice(s: &Stats, eps_ph: f64) -> Option<Choice> {
    if eps_ph <= 0.0 {
        return None;
    }
    let lb = eps_ph.log2();
    let mut best: Option<Choice> = None;
    let mut consider = |c: Choice| {
        if c.value.is_finite() && best.map_or(true, |b| c.value > b.value) {
            best = Some(c);
        }
    };

    // The sigmoid split 1 / (1 + 2^-u) gives P_x its share of the budget;
    // resolving shares far from 1/2 needs the log scale.
    let thetas = |u: f64| -> Option<(f64, f64)> {
        let lx = lb - (-u).exp2().ln_1p() / std::f64::consts::LN_2;
        let lz = lb - u.exp2().ln_1p() / std::f64::consts::LN_2;
        Some((theta_for(s.n_x, s.n_z, s.e_bx, lx)?, theta_for(s.n_z, s.n_x, s.e_bz, lz)?))
    };
    let obj = |u: f64| thetas(u).map_or(f64::NEG_INFINITY, |(tx, tz)| value(s, Config::Both, tx, tz));
    let (u, v) = maximize(obj, -60.0, 60.0, 120, 60);
    if let Some((tx, tz)) = thetas(u) {
        consider(Choice { config: Config::Both, theta_x: tx, theta_z: tz, value: v });
    }

    let full_x = 1.0 - s.e_bx;
    let full_z = 1.0 - s.e_bz;
    if let Some(tz) = theta_for(s.n_z, s.n_x, s.e_bz, lb) {
        consider(Choice { config: Config::XOnly, theta_x: full_x, theta_z: tz, value: value(s, Config::XOnly, full_x, tz) });
    }
    if let Some(tx) = theta_for(s.n_x, s.n_z, s.e_bx, lb) {
        consider(Choice { config: Config::ZOnly, theta_x: tx, theta_z: full_z, value: value(s, Config::ZOnly, tx, full_z) });
    }
    best
}

/// Phase budget for a given `k3`: the target minus the largest possible
/// authentication-and-amplification failure.
fn phase_budget(eps: f64, k3: u64, n: f64, m: f64) -> f64 {
    eps - eps3(k3 as f64, log2_a(n, m, m, m))
}

fn expected_stats(n: f64, p_x: f64, params: &ProtocolParams) -> Stats {
    Stats {
        n,
        n_x: n * p_x * p_x,
        n_z: n * (1.0 - p_x) * (1.0 - p_x),
        e_bx: params.e_bx,
        e_bz: params.e_bz,
        f: params.f_ec,
    }
}

/// Chooses `(p_x, theta_x, theta_z)` and the integer costs, then recomputes
/// every failure term from the rounded values.
///
/// Infeasibility is reported through [`PlanResult::feasible`]; `Err` is
/// reserved for invalid inputs.
pub fn optimize_plan(params: &ProtocolParams, input: &PlanInput) -> Result<PlanResult> {
    params.validate()?;
    match *input {
        PlanInput::Expected { n } => {
            if !(n >= 1.0) {
                return Err(Error::Domain(format!("n = {n} must be at least 1")));
            }
            let k3 = k3_shortcut(params.eps_target, n);
            let eval = |p_x: f64| -> (Stats, Option<Choice>) {
                let s = expected_stats(n, p_x, params);
                let b = phase_budget(params.eps_target, k3, n, s.n_x + s.n_z);
                (s, best_choice(&s, b))
            };
            let p_x = if params.optimize_p_x {
                // logistic parametrisation covers p_x close to 0 and 1
                let obj = |v: f64| eval(1.0 / (1.0 + (-v).exp())).1.map_or(f64::NEG_INFINITY, |c| c.value);
                let (v, _) = maximize(obj, -10.0, 10.0, 80, 60);
                1.0 / (1.0 + (-v).exp())
            } else {
                params.p_x
            };
            let (s, choice) = eval(p_x);
            Ok(finalize(params, &s, p_x, choice, k3, None, None))
        }
        PlanInput::Observed(o) => {
            if o.n == 0 || o.n_x + o.n_z == 0 || o.n_x + o.n_z > o.n {
                return Err(Error::Domain(format!(
                    "inconsistent counts n={} n_x={} n_z={}",
                    o.n, o.n_x, o.n_z
                )));
            }
            for e in [o.e_bx, o.e_bz] {
                if !(0.0..=1.0).contains(&e) {
                    return Err(Error::Domain(format!("error rate {e} outside [0, 1]")));
                }
            }
            let s = Stats {
                n: o.n as f64,
                n_x: o.n_x as f64,
                n_z: o.n_z as f64,
                e_bx: o.e_bx,
                e_bz: o.e_bz,
                f: 0.0,
            };
            let k3 = k3_shortcut(params.eps_target, s.n);
            let b = phase_budget(params.eps_target, k3, s.n, s.n_x + s.n_z);
            let choice = best_choice(&s, b);
            let p_x = params.p_x;
            Ok(finalize(params, &s, p_x, choice, k3, Some(o.k_ec), o.k_bs))
        }
    }
}

fn finalize(
    params: &ProtocolParams,
    s: &Stats,
    p_x: f64,
    choice: Option<Choice>,
    k3_target: u64,
    k_ec_observed: Option<u64>,
    k_bs_fixed: Option<u64>,
) -> PlanResult {
    let m = s.n_x + s.n_z;
    let eps_ph_budget = phase_budget(params.eps_target, k3_target, s.n, m);
    let mut diagnostics = Vec::new();
    let mut out = PlanResult {
        p_x,
        q_x: if m > 0.0 { s.n_x / m } else { 0.0 },
        n: s.n,
        n_x: s.n_x,
        n_z: s.n_z,
        e_bx: s.e_bx,
        e_bz: s.e_bz,
        theta_x: 1.0 - s.e_bx,
        theta_z: 1.0 - s.e_bz,
        p_theta_x: 0.0,
        p_theta_z: 0.0,
        use_x: false,
        use_z: false,
        costs: Costs::default(),
        k3: 0,
        k3_target,
        eps_ph_budget,
        pa_input: 0.0,
        l: 0,
        net_key: 0,
        budget: FailureBudget::new(0.0, 0.0, 0.0, 0.0),
        feasible: false,
        diagnostics: Vec::new(),
    };
    let Some(c) = choice else {
        diagnostics.push(if eps_ph_budget <= 0.0 {
            format!("eps3 at k3 = {k3_target} exhausts the failure target")
        } else {
            "no deviation pair meets the phase-estimation budget".to_string()
        });
        out.diagnostics = diagnostics;
        return out;
    };
    let (use_x, use_z) = c.config.uses();
    out.use_x = use_x;
    out.use_z = use_z;
    out.theta_x = c.theta_x;
    out.theta_z = c.theta_z;
    if use_z {
        out.p_theta_x = p_theta_bound(s.n_x, s.n_z, s.e_bx, c.theta_x).unwrap_or(1.0);
    }
    if use_x {
        out.p_theta_z = p_theta_bound(s.n_z, s.n_x, s.e_bz, c.theta_z).unwrap_or(1.0);
    }
    let pa_input = (if use_x { s.n_x } else { 0.0 }) + (if use_z { s.n_z } else { 0.0 });
    out.pa_input = pa_input;
    let l0 = (if use_x { s.n_x * (1.0 - phase_entropy(s.e_bz + c.theta_z)) } else { 0.0 })
        + (if use_z { s.n_z * (1.0 - phase_entropy(s.e_bx + c.theta_x)) } else { 0.0 });

    let g = match grouped_costs(k3_target as f64, s.n, m, pa_input, l0.max(0.0)) {
        Ok(g) => g,
        Err(e) => {
            diagnostics.push(e.to_string());
            out.diagnostics = diagnostics;
            return out;
        }
    };
    let k_ec = k_ec_observed.unwrap_or_else(|| {
        let leak = |n_b: f64, e: f64| (params.f_ec * n_b * h2(e)).ceil() as u64;
        (if use_x { leak(s.n_x, s.e_bx) } else { 0 }) + (if use_z { leak(s.n_z, s.e_bz) } else { 0 })
    });
    let costs = Costs {
        k_bs: k_bs_fixed.or(params.k_bs).unwrap_or(g.k_bs),
        k_ec,
        k_ev: params.k_ev.unwrap_or(g.k_ev),
        k_pa: params.k_pa.unwrap_or(g.k_pa),
        t_oe: g.t_oe,
    };
    let l_real = l0 - costs.t_oe as f64;
    let l = if l_real >= 1.0 { l_real.floor() as u64 } else { 0 };
    let eps_pa = tag_failure(pa_input + l as f64 - 1.0, costs.k_pa) + (-(costs.t_oe as f64)).exp2();
    out.budget = FailureBudget::new(
        tag_failure(s.n, costs.k_bs),
        tag_failure(m, costs.k_ev),
        out.p_theta_x + out.p_theta_z,
        eps_pa,
    );
    out.costs = costs;
    out.k3 = costs.k3();
    out.l = l;
    out.net_key = net_key_length(l, &costs);
    if l == 0 {
        diagnostics.push(format!("final length {l_real:.1} is not positive"));
    }
    if out.net_key <= 0 {
        diagnostics.push(format!("net key growth {} is not positive", out.net_key));
    }
    if out.budget.eps_total > params.eps_target {
        diagnostics.push(format!(
            "recomputed failure {:.4e} exceeds target {:.4e}",
            out.budget.eps_total, params.eps_target
        ));
    }
    out.feasible = l > 0 && out.net_key > 0;
    out.diagnostics = diagnostics;
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example() -> ProtocolParams {
        ProtocolParams::example(10_000_000, 1.0)
    }

    #[test]
    fn asymptotic_rate_limit() {
        let key = key_length_estimate(1e7, 0.0, 0.04, 0.04, 0.0, 0.0, 1.0, 0.0);
        assert!((key / 1e7 - (1.0 - 2.0 * h2(0.04))).abs() < 1e-12);
        assert!((key / 1e7 - 0.515_41).abs() < 1e-4);
    }

    #[test]
    fn negative_bracket_contributes_nothing() {
        let key = key_length_estimate(100.0, 100.0, 0.04, 0.3, 0.01, 0.01, 1.0, 0.0);
        let x_only = 100.0 * (1.0 - h2(0.04) - h2(0.31));
        assert!((key - x_only.max(0.0)).abs() < 1e-9);
    }

    #[test]
    fn theta_search_meets_target() {
        let t = theta_for(9.98e6, 2e4, 0.04, (1e-7f64).log2()).unwrap();
        assert!(log2_p_theta_bound(9.98e6, 2e4, 0.04, t).unwrap() <= (1e-7f64).log2());
        assert!(log2_p_theta_bound(9.98e6, 2e4, 0.04, t * 0.999).unwrap() > (1e-7f64).log2());
        assert!(theta_for(10.0, 10.0, 0.04, -200.0).is_none());
    }

    #[test]
    fn worked_example_plan() {
        let plan = optimize_plan(&example(), &PlanInput::Expected { n: 1e7 }).unwrap();
        assert!(plan.feasible, "{:?}", plan.diagnostics);
        assert!(plan.use_x && plan.use_z);
        assert!(plan.q_x >= 0.995, "q_x = {}", plan.q_x);
        assert!((plan.theta_x - 0.0107).abs() <= 0.0015, "theta_x = {}", plan.theta_x);
        assert!((plan.theta_z - 0.0084).abs() <= 0.0015, "theta_z = {}", plan.theta_z);
        assert!((plan.net_key as f64 / 4.41e6 - 1.0).abs() <= 0.05, "net = {}", plan.net_key);
        assert!((0.95e-7..=1.05e-7).contains(&plan.budget.eps_total), "{}", plan.budget.eps_total);
        assert!(plan.k3 >= plan.k3_target && plan.k3 <= plan.k3_target + 8);
        assert!(plan.budget.eps_ph <= plan.eps_ph_budget);
    }

    #[test]
    fn plan_identities_hold() {
        let plan = optimize_plan(&example(), &PlanInput::Expected { n: 1e7 }).unwrap();
        let c = plan.costs;
        assert_eq!(plan.net_key, plan.l as i64 - (2 * c.k_bs + c.k_ec + c.k_ev + c.k_pa) as i64);
        assert_eq!(plan.k3, 2 * c.k_bs + c.k_ev + c.k_pa + c.t_oe);
        let b = plan.budget;
        assert_eq!(b.eps_total, 2.0 * b.eps_bs + b.eps_ev + b.eps_ph + b.eps_pa);
    }

    #[test]
    fn zero_error_channel_keeps_most_bits() {
        let mut p = example();
        p.e_bx = 0.0;
        p.e_bz = 0.0;
        let plan = optimize_plan(&p, &PlanInput::Expected { n: 1e7 }).unwrap();
        assert!(plan.feasible);
        assert!(plan.l as f64 > 0.9 * (plan.n_x + plan.n_z), "{}", plan.l);
    }

    #[test]
    fn tiny_run_is_infeasible_not_error() {
        let plan = optimize_plan(&example(), &PlanInput::Expected { n: 500.0 }).unwrap();
        assert!(!plan.feasible);
        assert!(!plan.diagnostics.is_empty());
    }

    #[test]
    fn fixed_p_x_is_respected() {
        let mut p = example();
        p.optimize_p_x = false;
        p.p_x = 0.9;
        let plan = optimize_plan(&p, &PlanInput::Expected { n: 1e7 }).unwrap();
        assert_eq!(plan.p_x, 0.9);
        assert!((plan.n_x - 8.1e6).abs() < 1e-3);
    }

    #[test]
    fn observed_plan_uses_metered_costs() {
        let obs = Observed { n: 100_000, n_x: 40_000, n_z: 10_000, e_bx: 0.04, e_bz: 0.04, k_ec: 12_000, k_bs: Some(50) };
        let mut p = ProtocolParams::example(1_000_000, 0.1);
        p.eps_target = 1e-6;
        let plan = optimize_plan(&p, &PlanInput::Observed(obs)).unwrap();
        assert_eq!(plan.costs.k_ec, 12_000);
        assert_eq!(plan.costs.k_bs, 50);
        assert!(plan.feasible, "{:?}", plan.diagnostics);
    }

    #[test]
    fn overrides_replace_grouped_costs() {
        let mut p = example();
        p.k_ev = Some(80);
        let plan = optimize_plan(&p, &PlanInput::Expected { n: 1e7 }).unwrap();
        assert_eq!(plan.costs.k_ev, 80);
        assert_eq!(plan.budget.eps_ev, plan.n_x.mul_add(1.0, plan.n_z) * 2f64.powi(-79));
    }

    #[test]
    fn invalid_params_rejected() {
        let mut p = example();
        p.eta = 0.0;
        assert!(optimize_plan(&p, &PlanInput::Expected { n: 1e7 }).is_err());
        let mut p = example();
        p.e_bx = 0.6;
        assert!(p.validate().is_err());
    }
}

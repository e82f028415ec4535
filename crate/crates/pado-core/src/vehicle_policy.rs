//! The follower's per-slot decision: unit prices, the closed-form
//! local/offload/drop split, and the pre-allocated local CPU frequency
//! minimizing the drift-plus-penalty objective.

use serde::Serialize;

use crate::model::{OfferTerms, P2EnergyTerm, SimParams, TaskSpec, VehicleState};
use crate::num::{c, golden_section, log_grid, Real};

/// Per-cycle marginal prices of the three execution channels.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct UnitPrices<T: Real> {
    /// Local execution price (queue pressure plus switching energy).
    pub psi_loc: T,
    /// Offloading price `g / f_server`; infinite when not served.
    pub psi_off: T,
    /// Cloud/drop price; always the drop loss.
    pub psi_cld: T,
}

/// A vehicle's sealed bid for one slot: the workload on offer plus the two
/// reservation thresholds the server's pricing must beat.
#[derive(Debug, Clone, Serialize)]
pub struct VehicleBid<T: Real> {
    pub vehicle: usize,
    pub size_units: T,
    pub workload_cycles: T,
    pub resource_demand: Vec<T>,
    /// Provisional split formed against the prior offer.
    pub alpha: T,
    pub beta: T,
    /// Local frequency the thresholds were computed at.
    pub f_local: T,
    /// Local reservation price the server must undercut to win the task.
    pub psi_loc: T,
    /// Cloud reservation price (the drop loss).
    pub psi_cld: T,
}

/// Queue-pressure term of the local price and the P2 objective:
/// `|Q_s - zeta| + W_s - Gamma_s` for the task's class. May be negative.
pub fn queue_pressure<T: Real>(state: &VehicleState<T>, task: &TaskSpec<T>, params: &SimParams<T>) -> T {
    let s = task.class_index();
    (state.q[s] - params.slot_seconds).abs() + state.w[s] - params.gamma[s]
}

/// Unit prices for the three channels at a candidate local frequency and the
/// announced server terms (`None` = not served, offload price infinite).
pub fn unit_prices<T: Real>(
    state: &VehicleState<T>,
    task: &TaskSpec<T>,
    f_local: T,
    offer: Option<OfferTerms<T>>,
    params: &SimParams<T>,
) -> UnitPrices<T> {
    let psi_loc = queue_pressure(state, task, params) / (params.v_weight * f_local)
        + params.kappa * f_local;
    let psi_off = match offer {
        Some(o) if o.f_server > T::zero() => o.g / o.f_server,
        _ => T::infinity(),
    };
    UnitPrices {
        psi_loc,
        psi_off,
        psi_cld: params.drop_loss_per_cycle,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Channel {
    Local,
    Offload,
    Cloud,
}

/// Strict total order over the three channels with tie-break preference
/// local > offload > cloud, which makes the case dispatch a total function.
fn cheapest<T: Real>(p: &UnitPrices<T>) -> Channel {
    let mut best = Channel::Local;
    let mut best_val = p.psi_loc;
    if p.psi_off < best_val {
        best = Channel::Offload;
        best_val = p.psi_off;
    }
    if p.psi_cld < best_val {
        best = Channel::Cloud;
    }
    best
}

/// The closed-form split from the KKT case table.
///
/// (a) local not cheapest: full offload when offloading strictly beats the
/// cloud, otherwise full drop. (b) local < cloud < offload:
/// `alpha = min(1, V f^2/R (psi_cld - psi_loc))`, remainder dropped.
/// (c) local < offload < cloud: same form driven by `psi_off - psi_loc`,
/// remainder offloaded.
pub fn choose_split<T: Real>(
    prices: &UnitPrices<T>,
    v_weight: T,
    f_local: T,
    workload_cycles: T,
) -> (T, T) {
    let alpha_of = |gap: T| -> T {
        if gap <= T::zero() {
            T::zero()
        } else if workload_cycles <= T::zero() {
            T::one()
        } else {
            (v_weight * f_local * f_local / workload_cycles * gap).min(T::one())
        }
    };
    match cheapest(prices) {
        Channel::Offload => (T::zero(), T::one()),
        Channel::Cloud => (T::zero(), T::zero()),
        Channel::Local => {
            // Offload wins its tie against cloud.
            if prices.psi_off <= prices.psi_cld {
                let alpha = alpha_of(prices.psi_off - prices.psi_loc);
                (alpha, T::one() - alpha)
            } else {
                (alpha_of(prices.psi_cld - prices.psi_loc), T::zero())
            }
        }
    }
}

/// The per-slot drift-plus-penalty objective of problem P2.
///
/// `queue_term * (alpha R / f) + (alpha R / f)^2 / 2 + V * [energy + payment
/// + drop]`, with the energy term convention selected by
/// `params.p2_energy_term`. Inadmissible points evaluate to infinity.
pub fn p2_objective<T: Real>(
    state: &VehicleState<T>,
    task: &TaskSpec<T>,
    alpha: T,
    beta: T,
    f_local: T,
    offer: Option<OfferTerms<T>>,
    params: &SimParams<T>,
) -> T {
    let r = task.workload_cycles;
    if alpha > T::zero() && f_local <= T::zero() {
        return T::infinity();
    }
    let exec = if alpha > T::zero() { alpha * r / f_local } else { T::zero() };
    let payment = if beta > T::zero() {
        match offer {
            Some(o) if o.f_server > T::zero() => beta * r / o.f_server * o.g,
            _ => return T::infinity(),
        }
    } else {
        T::zero()
    };
    let energy_fraction = match params.p2_energy_term {
        P2EnergyTerm::AsPrinted => beta,
        P2EnergyTerm::AlphaVariant => alpha,
    };
    let energy = params.kappa * energy_fraction * f_local * r;
    let drop = (T::one() - alpha - beta) * params.drop_loss_per_cycle * r;
    let pressure = queue_pressure(state, task, params);
    pressure * exec + exec * exec / c(2.0) + params.v_weight * (energy + payment + drop)
}

/// Evaluates the P2 objective at a candidate frequency with the split the
/// closed form would choose there.
pub fn p2_at_frequency<T: Real>(
    state: &VehicleState<T>,
    task: &TaskSpec<T>,
    f_local: T,
    offer: Option<OfferTerms<T>>,
    params: &SimParams<T>,
) -> T {
    let prices = unit_prices(state, task, f_local, offer, params);
    let (alpha, beta) = choose_split(&prices, params.v_weight, f_local, task.workload_cycles);
    p2_objective(state, task, alpha, beta, f_local, offer, params)
}

/// Number of coarse grid points used by the frequency search (and by the
/// brute-force oracle, so the two explore the same landmarks).
pub const FREQ_GRID_POINTS: usize = 64;
/// The frequency search spans three decades below the class maximum.
pub const FREQ_SPAN_DECADES: f64 = 1e-3;

/// Grid the frequency search and the oracle share.
pub fn frequency_grid<T: Real>(f_max: T) -> Vec<T> {
    log_grid(f_max * c(FREQ_SPAN_DECADES), f_max, FREQ_GRID_POINTS)
}

/// Minimizes `eval` over `(0, f_max]` with the coarse log grid refined by
/// golden-section search around the best bracket.
pub fn minimize_over_frequency<T: Real>(f_max: T, mut eval: impl FnMut(T) -> T) -> (T, T) {
    let grid = frequency_grid(f_max);
    let mut best_i = 0;
    let mut best_v = T::infinity();
    for (i, f) in grid.iter().enumerate() {
        let v = eval(*f);
        if v < best_v {
            best_v = v;
            best_i = i;
        }
    }
    let lo = grid[best_i.saturating_sub(1)];
    let hi = grid[(best_i + 1).min(grid.len() - 1)];
    let (f_ref, v_ref) = golden_section(&mut eval, lo, hi, 60);
    if v_ref < best_v {
        (f_ref, v_ref)
    } else {
        (grid[best_i], best_v)
    }
}

/// Pre-allocated local frequency: the `f` minimizing the P2 objective with
/// the closed-form split taken at each candidate. Returns the class maximum
/// when the optimum leaves nothing local (objective constant in `f`).
pub fn choose_local_frequency<T: Real>(
    state: &VehicleState<T>,
    task: &TaskSpec<T>,
    offer: Option<OfferTerms<T>>,
    params: &SimParams<T>,
) -> T {
    let f_max = params.f_local_max[task.class_index()];
    let (f_best, _) = minimize_over_frequency(f_max, |f| p2_at_frequency(state, task, f, offer, params));
    let prices = unit_prices(state, task, f_best, offer, params);
    let (alpha, _) = choose_split(&prices, params.v_weight, f_best, task.workload_cycles);
    if alpha <= T::zero() {
        f_max
    } else {
        f_best
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tests_support::{params_for_tests, task_in_class};

    fn state_with(q: f64, w: f64, class: usize, params: &SimParams<f64>) -> VehicleState<f64> {
        let mut st = VehicleState::new(params.classes());
        st.q[class - 1] = q;
        st.w[class - 1] = w;
        st
    }

    #[test]
    fn unit_price_local_matches_hand_arithmetic() {
        // Q = 8 ms, zeta = 1 ms, W = 5 ms, Gamma_2 = 5 ms, V = 1e8, f = 2e9:
        // (|7e-3| + 5e-3 - 5e-3) / 2e17 + 2e-19 = 2.35e-19.
        let mut params = params_for_tests();
        params.gamma = vec![2e-3, 5e-3, 8e-3, 16e-3];
        let task = task_in_class(20.0, 2, &params);
        let state = state_with(8e-3, 5e-3, 2, &params);
        let p = unit_prices(&state, &task, 2e9, None, &params);
        assert!((p.psi_loc - 2.35e-19).abs() < 1e-25, "psi_loc = {}", p.psi_loc);
        assert!(p.psi_off.is_infinite());
        assert_eq!(p.psi_cld, params.drop_loss_per_cycle);
    }

    #[test]
    fn free_service_has_zero_offload_price() {
        let params = params_for_tests();
        let task = task_in_class(10.0, 1, &params);
        let state = VehicleState::new(params.classes());
        let offer = OfferTerms { f_server: 2e10, g: 0.0 };
        let p = unit_prices(&state, &task, 2e9, Some(offer), &params);
        assert_eq!(p.psi_off, 0.0);
    }

    #[test]
    fn split_full_offload_when_offload_cheapest() {
        let params = params_for_tests();
        let prices = UnitPrices { psi_loc: 3e-19, psi_off: 1e-19, psi_cld: 1e-18 };
        let (a, b) = choose_split(&prices, params.v_weight, 2e9, 2e7);
        assert_eq!((a, b), (0.0, 1.0));
    }

    #[test]
    fn split_full_drop_when_cloud_cheapest() {
        let params = params_for_tests();
        let prices = UnitPrices { psi_loc: 3e-18, psi_off: 2e-18, psi_cld: 1e-18 };
        let (a, b) = choose_split(&prices, params.v_weight, 2e9, 2e7);
        assert_eq!((a, b), (0.0, 0.0));
    }

    #[test]
    fn split_case_c_interior() {
        // V f^2 / R = 1e8 * 4e18 / 2e7 = 2e19; gap 3e-20 -> alpha = 0.6.
        let params = params_for_tests();
        let prices = UnitPrices { psi_loc: 2e-19, psi_off: 2.3e-19, psi_cld: 1e-18 };
        let (a, b) = choose_split(&prices, params.v_weight, 2e9, 2e7);
        assert!((a - 0.6).abs() < 1e-12, "alpha = {a}");
        assert!((b - 0.4).abs() < 1e-12, "beta = {b}");
    }

    #[test]
    fn split_case_b_saturates() {
        let params = params_for_tests();
        // Huge cloud-local gap saturates the min at 1.
        let prices = UnitPrices { psi_loc: 1e-19, psi_off: 5e-18, psi_cld: 4e-18 };
        let (a, b) = choose_split(&prices, params.v_weight, 2e9, 2e7);
        assert_eq!((a, b), (1.0, 0.0));
    }

    #[test]
    fn split_case_c_against_grid_oracle() {
        // The closed form must match an exhaustive 0.01-step grid on the P2
        // objective within grid resolution.
        let mut params = params_for_tests();
        params.drop_loss_per_cycle = 1e-18;
        let task = task_in_class(20.0, 2, &params);
        let state = state_with(6e-3, 3e-3, 2, &params);
        let f_local = 2e9;
        let offer = Some(OfferTerms { f_server: 4e10, g: 4e10 * 2.3e-19 });
        let prices = unit_prices(&state, &task, f_local, offer, &params);
        assert!(prices.psi_loc < prices.psi_off && prices.psi_off < prices.psi_cld);
        let (a_cf, b_cf) = choose_split(&prices, params.v_weight, f_local, task.workload_cycles);
        let j_cf = p2_objective(&state, &task, a_cf, b_cf, f_local, offer, &params);

        let mut best = f64::INFINITY;
        for ai in 0..=100 {
            let alpha = ai as f64 / 100.0;
            for bi in 0..=(100 - ai) {
                let beta = bi as f64 / 100.0;
                let j = p2_objective(&state, &task, alpha, beta, f_local, offer, &params);
                if j < best {
                    best = j;
                }
            }
        }
        assert!(
            j_cf <= best + 1e-12 * best.abs().max(1e-30),
            "closed form {j_cf} vs grid {best}"
        );
    }

    #[test]
    fn p2_pure_drop_cost() {
        let params = params_for_tests();
        let task = task_in_class(20.0, 1, &params);
        let state = VehicleState::new(params.classes());
        let j = p2_objective(&state, &task, 0.0, 0.0, 2e9, None, &params);
        let expect = params.v_weight * params.drop_loss_per_cycle * task.workload_cycles;
        assert!((j - expect).abs() < 1e-18 * expect.abs().max(1.0));
    }

    #[test]
    fn p2_local_only_hand_value() {
        // Zero queues with Gamma aligned to zeta kill the pressure term:
        // J = (R/f)^2 / 2 + V kappa f R.
        let mut params = params_for_tests();
        params.gamma = vec![1e-3];
        params.f_local_max = vec![2e9];
        let task = task_in_class(10.0, 1, &params);
        let state = VehicleState::new(1);
        let j = p2_objective(&state, &task, 1.0, 0.0, 2e9, None, &params);
        let exec: f64 = 1e7 / 2e9;
        let expect = exec * exec / 2.0 + 1e8 * 1e-28 * 2e9 * 1e7;
        assert!((j - expect).abs() < 1e-12 * expect, "j = {j}, expect = {expect}");
    }

    #[test]
    fn frequency_irrelevant_when_alpha_zero() {
        let params = params_for_tests();
        let task = task_in_class(15.0, 1, &params);
        let state = VehicleState::new(params.classes());
        // Free fast service beats local at every frequency.
        let offer = Some(OfferTerms { f_server: 4e10, g: 0.0 });
        let f = choose_local_frequency(&state, &task, offer, &params);
        assert_eq!(f, params.f_local_max[0]);
    }

    #[test]
    fn heavy_queue_drives_frequency_to_max() {
        let mut params = params_for_tests();
        params.drop_loss_per_cycle = 1e-16; // dropping must not dominate
        let task = task_in_class(15.0, 1, &params);
        let mut state = VehicleState::new(params.classes());
        state.q[0] = 20e-3;
        state.w[0] = 200e-3;
        let f = choose_local_frequency(&state, &task, None, &params);
        // Grid oracle over the shared frequency grid.
        let mut best = (0.0f64, f64::INFINITY);
        for cand in frequency_grid(params.f_local_max[0]) {
            let v = p2_at_frequency(&state, &task, cand, None, &params);
            if v < best.1 {
                best = (cand, v);
            }
        }
        assert_eq!(best.0, params.f_local_max[0]);
        assert_eq!(f, params.f_local_max[0]);
    }

    #[test]
    fn huge_v_empty_queue_prefers_small_frequency() {
        let mut params = params_for_tests();
        params.v_weight = 1e11;
        params.drop_loss_per_cycle = 1e-16;
        let task = task_in_class(15.0, 4, &params);
        let state = VehicleState::new(params.classes());
        let f = choose_local_frequency(&state, &task, None, &params);
        let f_max = params.f_local_max[3];
        assert!(f < 0.2 * f_max, "expected energy-minimal frequency, got {f}");
        // The search must sit within 1e-3 relative of the grid optimum.
        let mut best = f64::INFINITY;
        for cand in frequency_grid(f_max) {
            best = best.min(p2_at_frequency(&state, &task, cand, None, &params));
        }
        let got = p2_at_frequency(&state, &task, f, None, &params);
        assert!(got <= best * (1.0 + 1e-3) + 1e-30);
    }

    #[test]
    fn price_ordering_invariant_under_common_scaling() {
        let params = params_for_tests();
        for scale in [1e-3, 1.0, 1e6] {
            let p = UnitPrices { psi_loc: 2e-19, psi_off: 2.3e-19, psi_cld: 1e-18 };
            let ps = UnitPrices {
                psi_loc: p.psi_loc * scale,
                psi_off: p.psi_off * scale,
                psi_cld: p.psi_cld * scale,
            };
            assert_eq!(cheapest(&p), cheapest(&ps));
            // Case dispatch (which branch fires) is ordering-driven.
            let (a, b) = choose_split(&p, params.v_weight, 2e9, 2e7);
            let (a2, b2) = choose_split(&ps, params.v_weight, 2e9, 2e7);
            assert_eq!(a > 0.0, a2 > 0.0);
            assert_eq!(b > 0.0, b2 > 0.0);
        }
    }
}

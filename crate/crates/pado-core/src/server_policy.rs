//! The leader's per-slot decisions: grid purchase, perturbation and battery
//! bookkeeping, and pricing/frequency allocation by projected dual ascent
//! over per-vehicle case objectives.

use serde::Serialize;

use crate::model::{DualUpdateSign, OfferTerms, SimParams};
use crate::num::{c, golden_section, lin_grid, log_grid, pos, Real};
use crate::vehicle_policy::VehicleBid;

/// Relative margin keeping prices strictly inside participation regions.
const PRICE_MARGIN: f64 = 1e-9;

// ============================================================================
// Energy traces
// ============================================================================

/// Renewable generation and grid price traces, one value per slot.
#[derive(Debug, Clone, Serialize)]
pub struct EnergyTraces<T: Real> {
    /// Renewable production per slot, joules, in `[0, U_max]`.
    pub renewable: Vec<T>,
    /// Grid unit price per slot, currency per joule, positive.
    pub price: Vec<T>,
    /// Maximum price of the trace source. The perturbation must satisfy the
    /// battery bound for every slot, so it is derived from the source, not
    /// from a horizon prefix (keeps runs prefix-stable).
    pub price_max: T,
}

impl<T: Real> EnergyTraces<T> {
    pub fn len(&self) -> usize {
        self.renewable.len().min(self.price.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

// ============================================================================
// Operations
// ============================================================================

/// Perturbation offset `theta = H * chi_max / eta_minus + E_max` (the tight
/// choice of the defining inequality).
pub fn perturbation_theta<T: Real>(h_weight: T, chi_max: T, eta_discharge: T, e_max: T) -> T {
    h_weight * chi_max / eta_discharge + e_max
}

/// Grid purchasing rule.
///
/// When `(B - theta) * eta_minus + H * chi > 0` the battery is considered
/// abundant: it covers up to `E_max` of the deficit and the grid supplies
/// the rest. Otherwise the battery is preserved and the grid covers the
/// whole deficit.
pub fn grid_purchase<T: Real>(
    battery: T,
    theta: T,
    h_weight: T,
    chi: T,
    eta_discharge: T,
    deficit: T,
    e_max: T,
) -> T {
    let coef = (battery - theta) * eta_discharge + h_weight * chi;
    if coef > T::zero() {
        pos(deficit - e_max)
    } else {
        deficit
    }
}

/// Projected dual update `nu' = [nu +/- step * (usage - omega)]^+`.
///
/// `Ascent` adds the subgradient (moves toward feasibility when capacity is
/// violated); `AsPrinted` subtracts it, as published.
pub fn update_multipliers<T: Real>(
    nu: &[T],
    step: T,
    usage: &[T],
    omega: &[T],
    sign: DualUpdateSign,
) -> Vec<T> {
    nu.iter()
        .zip(usage.iter().zip(omega.iter()))
        .map(|(n, (u, o))| {
            let grad = step * (*u - *o);
            match sign {
                DualUpdateSign::Ascent => pos(*n + grad),
                DualUpdateSign::AsPrinted => pos(*n - grad),
            }
        })
        .collect()
}

/// Revenue for one slot: service income minus the grid bill.
pub fn server_revenue<T: Real>(
    served: impl IntoIterator<Item = (T, T, OfferTerms<T>)>,
    chi: T,
    grid: T,
) -> T {
    let income: T = served
        .into_iter()
        .map(|(beta, workload, terms)| beta * workload / terms.f_server * terms.g)
        .sum();
    income - chi * grid
}

/// Charging rule: store the renewable surplus up to the charge cap, clamped
/// so the battery never exceeds its confinement ceiling
/// `theta - H * chi_max / eta_minus + eta_plus * C_max` (the ceiling at the
/// peak price, which lower-bounds the ceiling of every slot).
pub fn charge_rule<T: Real>(
    battery: T,
    theta: T,
    chi_max: T,
    surplus: T,
    params: &SimParams<T>,
) -> T {
    let ceiling = theta - params.h_weight * chi_max / params.eta_discharge
        + params.eta_charge * params.c_max;
    let headroom = pos(ceiling - battery) / params.eta_charge;
    params.c_max.min(pos(surplus)).min(headroom)
}

// ============================================================================
// Leader case objectives and the dual-ascent offer solver
// ============================================================================

/// The three printed leader objectives for one vehicle at `(f_server, g)`:
/// full offload, partial offload (with the follower's closed-form response
/// substituted), and rejection. The factor `t_factor` multiplies the printed
/// `T` occurrences in the partial-offload form.
#[allow(clippy::too_many_arguments)]
pub fn case_objectives<T: Real>(
    bid: &VehicleBid<T>,
    f_server: T,
    g: T,
    b_tilde: T,
    nu: &[T],
    params: &SimParams<T>,
) -> (T, T, T) {
    let r = bid.workload_cycles;
    let h = params.h_weight;
    let kbe = params.kappa * b_tilde * params.eta_discharge;
    let nu_r_minus_omega: T = nu
        .iter()
        .zip(bid.resource_demand.iter().zip(params.omega.iter()))
        .map(|(n, (ri, o))| *n * (*ri - *o))
        .sum();
    let nu_omega: T = nu.iter().zip(params.omega.iter()).map(|(n, o)| *n * *o).sum();

    let lambda1 = -r * (kbe * f_server + h / f_server * g) + nu_r_minus_omega;

    let f_loc_sq = bid.f_local * bid.f_local;
    let price_ratio = g / f_server;
    let t_factor = params.lambda2_t_factor;
    let lambda2 = h * f_loc_sq * price_ratio * price_ratio
        + nu_r_minus_omega
        + (kbe * f_server * f_loc_sq - r * t_factor * h) * price_ratio
        - r * t_factor * kbe * f_server;

    let lambda3 = -nu_omega;
    (lambda1, lambda2, lambda3)
}

/// The follower's offloaded fraction under the partial-offload (case c)
/// response at price ratio `psi = g / f_server`.
pub fn case2_beta<T: Real>(bid: &VehicleBid<T>, psi: T, v_weight: T) -> T {
    let gap = psi - bid.psi_loc;
    if gap <= T::zero() || bid.workload_cycles <= T::zero() {
        return T::zero();
    }
    let alpha = (v_weight * bid.f_local * bid.f_local / bid.workload_cycles * gap).min(T::one());
    T::one() - alpha
}

/// Per-vehicle contribution to `phi` when serving fraction `beta` at
/// `(f_server, g)`: `-beta * R * (kappa * B~ * eta_minus * f + H/f * g)`.
pub fn phi_contribution<T: Real>(
    workload: T,
    beta: T,
    f_server: T,
    g: T,
    b_tilde: T,
    params: &SimParams<T>,
) -> T {
    -beta
        * workload
        * (params.kappa * b_tilde * params.eta_discharge * f_server
            + params.h_weight / f_server * g)
}

/// Which serving regime the solver selected for a vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ServeCase {
    FullOffload,
    PartialOffload,
    Reject,
}

#[derive(Debug, Clone, Copy)]
struct CaseCandidate<T: Real> {
    terms: Option<OfferTerms<T>>,
    /// phi contribution of the served fraction (0 when rejecting).
    contribution: T,
    /// contribution + nu . r for served cases; 0 for rejection.
    value: T,
    case: ServeCase,
}

/// The leader's resolved offer for one slot.
#[derive(Debug, Clone, Serialize)]
pub struct ServerOffer<T: Real> {
    /// Per-bid terms, `None` for rejected vehicles.
    pub terms: Vec<Option<OfferTerms<T>>>,
    /// Case selected per bid.
    pub cases: Vec<ServeCase>,
    /// Dual multipliers at termination.
    pub nu: Vec<T>,
    /// Dual iterations run.
    pub iterations: usize,
    /// Final `phi` value.
    pub phi: T,
    /// Whether the `|phi tolerance` gate fired before the iteration cap.
    pub converged: bool,
}

impl<T: Real> ServerOffer<T> {
    pub fn all_reject(bids: usize, nu: Vec<T>) -> Self {
        Self {
            terms: vec![None; bids],
            cases: vec![ServeCase::Reject; bids],
            nu,
            iterations: 0,
            phi: T::zero(),
            converged: true,
        }
    }
}

/// Feasible price-ratio interval for one case at a given `f_server`, with
/// strict participation inequalities padded by a small margin.
fn case_psi_bounds<T: Real>(
    bid: &VehicleBid<T>,
    f_server: T,
    case: ServeCase,
    params: &SimParams<T>,
) -> Option<(T, T)> {
    let margin = |x: T| x.abs().max(params.drop_loss_per_cycle) * c(PRICE_MARGIN);
    let psi_cap = params.g_max / f_server;
    match case {
        ServeCase::FullOffload => {
            let thr = bid.psi_loc.min(bid.psi_cld);
            let hi = (thr - margin(thr)).min(psi_cap);
            if hi <= T::zero() {
                None
            } else {
                Some((T::zero(), hi))
            }
        }
        ServeCase::PartialOffload => {
            if !(bid.psi_loc < bid.psi_cld) || bid.workload_cycles <= T::zero() {
                return None;
            }
            // beta > 0 requires alpha < 1.
            let alpha_cap =
                bid.psi_loc + bid.workload_cycles / (params.v_weight * bid.f_local * bid.f_local);
            let lo = pos(bid.psi_loc + margin(bid.psi_loc));
            let hi = (bid.psi_cld - margin(bid.psi_cld))
                .min(alpha_cap - margin(alpha_cap))
                .min(psi_cap);
            if lo < hi {
                Some((lo, hi))
            } else {
                None
            }
        }
        ServeCase::Reject => None,
    }
}

const OFFER_GRID: usize = 32;

/// Minimizes the true phi contribution of one case over the feasible
/// `(f_server, psi)` box: a 32x32 grid pass followed by coordinate-wise
/// golden-section refinement around the best cell.
fn minimize_case<T: Real>(
    bid: &VehicleBid<T>,
    case: ServeCase,
    b_tilde: T,
    params: &SimParams<T>,
) -> Option<(OfferTerms<T>, T)> {
    let f_min = params.f_server_min(bid.workload_cycles);
    if f_min >= params.f_server_max {
        return None;
    }
    let beta_at = |psi: T| match case {
        ServeCase::FullOffload => T::one(),
        ServeCase::PartialOffload => case2_beta(bid, psi, params.v_weight),
        ServeCase::Reject => T::zero(),
    };
    let eval = |f: T, psi: T| phi_contribution(bid.workload_cycles, beta_at(psi), f, psi * f, b_tilde, params);

    let f_grid = log_grid(f_min, params.f_server_max, OFFER_GRID);
    let mut best: Option<(T, T, T)> = None; // (f, psi, value)
    for &f in &f_grid {
        let Some((lo, hi)) = case_psi_bounds(bid, f, case, params) else {
            continue;
        };
        for &psi in &lin_grid(lo, hi, OFFER_GRID) {
            let v = eval(f, psi);
            if best.map_or(true, |b| v < b.2) {
                best = Some((f, psi, v));
            }
        }
    }
    let (mut f_best, mut psi_best, mut v_best) = best?;

    // Local refinement: two rounds of coordinate golden-section.
    for _ in 0..2 {
        if let Some((lo, hi)) = case_psi_bounds(bid, f_best, case, params) {
            let (p, v) = golden_section(|psi| eval(f_best, psi), lo, hi, 48);
            if v < v_best {
                psi_best = p;
                v_best = v;
            }
        }
        let (f, v) = golden_section(
            |f| match case_psi_bounds(bid, f, case, params) {
                Some((lo, hi)) => eval(f, psi_best.max(lo).min(hi)),
                None => T::infinity(),
            },
            f_min,
            params.f_server_max,
            48,
        );
        if v < v_best {
            // Re-clamp psi into the refined frequency's feasible band.
            if let Some((lo, hi)) = case_psi_bounds(bid, f, case, params) {
                f_best = f;
                psi_best = psi_best.max(lo).min(hi);
                v_best = v;
            }
        }
    }
    Some((
        OfferTerms {
            f_server: f_best,
            g: psi_best * f_best,
        },
        v_best,
    ))
}

/// Best case for one bid at the current duals.
fn best_case_for<T: Real>(bid: &VehicleBid<T>, b_tilde: T, nu: &[T], params: &SimParams<T>) -> CaseCandidate<T> {
    let nu_r: T = nu
        .iter()
        .zip(bid.resource_demand.iter())
        .map(|(n, r)| *n * *r)
        .sum();
    // Rejection is the baseline; serving must strictly beat it.
    let mut chosen = CaseCandidate {
        terms: None,
        contribution: T::zero(),
        value: T::zero(),
        case: ServeCase::Reject,
    };
    for case in [ServeCase::FullOffload, ServeCase::PartialOffload] {
        if let Some((terms, contribution)) = minimize_case(bid, case, b_tilde, params) {
            let value = contribution + nu_r;
            if value < chosen.value {
                chosen = CaseCandidate {
                    terms: Some(terms),
                    contribution,
                    value,
                    case,
                };
            }
        }
    }
    chosen
}

/// Algorithm-1 style solver for the leader's slot problem: alternate the
/// per-vehicle case minimizations with projected dual updates until the
/// `phi` change falls below tolerance or the iteration cap is reached.
pub fn solve_offer<T: Real>(
    bids: &[VehicleBid<T>],
    b_tilde: T,
    nu_init: &[T],
    params: &SimParams<T>,
) -> ServerOffer<T> {
    let k = params.resources();
    debug_assert!(bids.iter().all(|b| b.resource_demand.len() == k));
    if bids.is_empty() {
        return ServerOffer::all_reject(0, nu_init.to_vec());
    }

    let mut nu = nu_init.to_vec();
    let mut phi_prev: Option<T> = None;
    let mut iterations = 0usize;
    let mut converged = false;
    let mut decisions: Vec<CaseCandidate<T>> = Vec::new();
    let mut phi = T::zero();

    while iterations < params.dual_max_iters {
        iterations += 1;
        decisions.clear();
        let mut usage = vec![T::zero(); k];
        let mut contribution_sum = T::zero();
        for bid in bids {
            let d = best_case_for(bid, b_tilde, &nu, params);
            if d.terms.is_some() {
                for (u, r) in usage.iter_mut().zip(bid.resource_demand.iter()) {
                    *u += *r;
                }
            }
            contribution_sum += d.contribution;
            decisions.push(d);
        }
        let slack: T = nu
            .iter()
            .zip(usage.iter().zip(params.omega.iter()))
            .map(|(n, (u, o))| *n * (*u - *o))
            .sum();
        phi = contribution_sum + slack;

        if let Some(prev) = phi_prev {
            if (phi - prev).abs() < params.dual_tolerance {
                converged = true;
                break;
            }
        }
        phi_prev = Some(phi);
        if iterations >= params.dual_max_iters {
            break;
        }
        let step = params.dual_step / c::<T>((iterations as f64).sqrt());
        nu = update_multipliers(&nu, step, &usage, &params.omega, params.dual_update_sign);
    }

    ServerOffer {
        terms: decisions.iter().map(|d| d.terms).collect(),
        cases: decisions.iter().map(|d| d.case).collect(),
        nu,
        iterations,
        phi,
        converged,
    }
}

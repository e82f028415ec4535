//! Domain types and slot-level physics: task generation, delay-class
//! binning, queue recursions, execution-time and energy formulas, and
//! battery dynamics.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::ZeroFrequency;
use crate::num::{c, pos, Real};

/// How the P2 drift-plus-penalty objective charges local execution energy.
///
/// `AsPrinted` keeps the published objective's `κ·β·f_local·R` term;
/// `AlphaVariant` charges `κ·α·f_local·R`, which is the form the closed-form
/// split (and the physical energy model) is consistent with. The oracle
/// suite arbitrates: the closed form is exactly optimal only under
/// `AlphaVariant`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum P2EnergyTerm {
    AsPrinted,
    #[default]
    AlphaVariant,
}

/// Sign convention of the dual multiplier update.
///
/// `Ascent` is projected subgradient ascent (moves toward feasibility when
/// capacity is violated); `AsPrinted` is the published subtraction, kept for
/// comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DualUpdateSign {
    #[default]
    Ascent,
    AsPrinted,
}

// ============================================================================
// Parameters
// ============================================================================

/// All physical and algorithmic parameters of one experiment.
///
/// Task sizes are in task units (1 unit = 1000 bits); workloads are in CPU
/// cycles (`bits * cycles_per_bit`); times in seconds; energies in joules.
/// The drop loss is stored per cycle so that all three unit prices share the
/// per-cycle normalization.
#[derive(Debug, Clone, Serialize)]
pub struct SimParams<T: Real> {
    /// Number of vehicles (M).
    pub vehicles: usize,
    /// Bernoulli task arrival probability per vehicle per slot (rho).
    pub arrival_prob: T,
    /// Task size bounds in task units.
    pub task_units_min: T,
    pub task_units_max: T,
    /// CPU cycles needed per bit (L).
    pub cycles_per_bit: T,
    /// Slot length in seconds (zeta).
    pub slot_seconds: T,
    /// Delay-class deadlines, positive and non-decreasing (Gamma).
    pub gamma: Vec<T>,
    /// Per-class maximum local CPU frequency, cycles/s.
    pub f_local_max: Vec<T>,
    /// Effective switched capacitance (kappa).
    pub kappa: T,
    /// Vehicle Lyapunov weight (V).
    pub v_weight: T,
    /// Drop loss per cycle of workload (derived from the per-unit loss).
    pub drop_loss_per_cycle: T,
    /// Server-side delay guarantee in seconds (tau_d).
    pub tau_d: T,
    /// Server Lyapunov weight (H).
    pub h_weight: T,
    /// Charging efficiency, in (0, 1].
    pub eta_charge: T,
    /// Discharging efficiency, >= 1.
    pub eta_discharge: T,
    /// Per-slot battery discharge cap in joules (E_max).
    pub e_max: T,
    /// Per-slot battery charge cap in joules (C_max).
    pub c_max: T,
    /// Renewable generation peak, joules per slot (U_max).
    pub u_max: T,
    /// Server resource capacities, length K (Omega).
    pub omega: Vec<T>,
    /// Upper bound of each task's per-resource demand draw.
    pub demand_max: Vec<T>,
    /// Price search ceiling for the per-vehicle rental price g.
    pub g_max: T,
    /// Dual step size (ell).
    pub dual_step: T,
    /// Dual convergence tolerance on |phi_n - phi_{n-1}| (epsilon).
    pub dual_tolerance: T,
    /// Dual iteration cap (N_iter).
    pub dual_max_iters: usize,
    /// Horizon in slots.
    pub t_slots: usize,
    /// Master RNG seed.
    pub seed: u64,
    /// Initial battery level in joules.
    pub battery_init: T,
    /// Maximum server CPU frequency assignable to one vehicle, cycles/s.
    pub f_server_max: T,
    /// Initial dual multiplier on the first slot (nu_max).
    pub nu_max: T,
    /// Energy-term convention of the P2 objective.
    pub p2_energy_term: P2EnergyTerm,
    /// Sign convention of the dual update.
    pub dual_update_sign: DualUpdateSign,
    /// The unexplained factor T in the partial-offload leader objective.
    pub lambda2_t_factor: T,
    /// Leader/follower exchanges per slot (1 = single exchange).
    pub stackelberg_inner_rounds: usize,
}

impl<T: Real> SimParams<T> {
    /// Number of delay classes (S).
    pub fn classes(&self) -> usize {
        self.gamma.len()
    }

    /// Number of resource types (K).
    pub fn resources(&self) -> usize {
        self.omega.len()
    }

    /// Workload in cycles for a task of `units` task units.
    pub fn workload_cycles(&self, units: T) -> T {
        units * c::<T>(1000.0) * self.cycles_per_bit
    }

    /// Minimum feasible server frequency for `workload` under the
    /// server-side deadline guarantee (strict inequality padded).
    pub fn f_server_min(&self, workload: T) -> T {
        workload / self.tau_d * (T::one() + c(1e-12))
    }
}

// ============================================================================
// Domain types
// ============================================================================

/// One generated computation task.
#[derive(Debug, Clone, Serialize)]
pub struct TaskSpec<T: Real> {
    /// Size in task units (1 unit = 1000 bits).
    pub size_units: T,
    /// Size in bits.
    pub size_bits: T,
    /// Workload in CPU cycles.
    pub workload_cycles: T,
    /// Maximum tolerable delay in seconds.
    pub deadline: T,
    /// Per-resource demand, length K.
    pub resource_demand: Vec<T>,
    /// Delay class, 1-based in [1, S].
    pub delay_class: usize,
}

impl<T: Real> TaskSpec<T> {
    /// 0-based index into per-class vectors.
    pub fn class_index(&self) -> usize {
        self.delay_class - 1
    }
}

/// Per-vehicle queue state.
#[derive(Debug, Clone, Serialize)]
pub struct VehicleState<T: Real> {
    /// Delay queues per class, seconds.
    pub q: Vec<T>,
    /// Virtual queues per class, seconds.
    pub w: Vec<T>,
    /// Running total of the execution-cost integrand.
    pub cumulative_cost: T,
}

impl<T: Real> VehicleState<T> {
    pub fn new(classes: usize) -> Self {
        Self {
            q: vec![T::zero(); classes],
            w: vec![T::zero(); classes],
            cumulative_cost: T::zero(),
        }
    }

    /// Both recursions clamp at zero; violated only by a bug.
    pub fn is_nonnegative(&self) -> bool {
        self.q.iter().chain(self.w.iter()).all(|v| *v >= T::zero())
    }
}

/// Server-side state: battery, perturbation, duals, revenue ledger.
#[derive(Debug, Clone, Serialize)]
pub struct ServerState<T: Real> {
    /// Battery level, joules.
    pub battery: T,
    /// Perturbation offset, joules.
    pub theta: T,
    /// Dual multipliers per resource, non-negative.
    pub nu: Vec<T>,
    /// Running revenue total.
    pub cumulative_revenue: T,
}

impl<T: Real> ServerState<T> {
    /// Virtual battery level `B - theta`; may be negative.
    pub fn b_tilde(&self) -> T {
        self.battery - self.theta
    }
}

/// A vehicle's slot action.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct VehicleAction<T: Real> {
    /// Fraction executed locally.
    pub alpha: T,
    /// Fraction offloaded to the server.
    pub beta: T,
    /// Pre-allocated local CPU frequency, cycles/s.
    pub f_local: T,
}

impl<T: Real> VehicleAction<T> {
    pub fn dropped_fraction(&self) -> T {
        pos(T::one() - self.alpha - self.beta)
    }
}

/// The server's terms for one vehicle this slot.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct OfferTerms<T: Real> {
    /// Rented CPU frequency, cycles/s.
    pub f_server: T,
    /// Rental price, currency per second of CPU time at that frequency.
    pub g: T,
}

/// One slot's joint action across all agents.
#[derive(Debug, Clone, Serialize)]
pub struct SlotDecision<T: Real> {
    /// Per-vehicle `(alpha, beta, f_local)`; identity action if no task.
    pub vehicle_actions: Vec<Option<VehicleAction<T>>>,
    /// Per-vehicle server terms; `None` means not served.
    pub offers: Vec<Option<OfferTerms<T>>>,
    /// Energy bought from the grid, joules.
    pub grid_purchase: T,
    /// Energy charged into the battery, joules.
    pub charge: T,
}

// ============================================================================
// Operations
// ============================================================================

/// Largest class index `h` (1-based) with `gamma[h-1] <= deadline`;
/// clamps to class 1 when the deadline is below every class deadline.
pub fn delay_class<T: Real>(deadline: T, gamma: &[T]) -> usize {
    let mut h = 0;
    for (j, g) in gamma.iter().enumerate() {
        if *g <= deadline {
            h = j + 1;
        }
    }
    h.max(1)
}

/// Draws a task with probability `arrival_prob`.
///
/// Sizes are uniform on `[task_units_min, task_units_max]`; deadlines are
/// log-uniform on `[gamma_1, gamma_S * r]` where `r` is the geometric ratio
/// of the class deadlines, so every class receives arrivals; resource
/// demands are uniform on `[0, demand_max_k]`.
pub fn generate_task<T: Real, R: Rng>(rng: &mut R, params: &SimParams<T>) -> Option<TaskSpec<T>> {
    let draw: f64 = rng.gen();
    if !(draw < params.arrival_prob.to_f64().unwrap_or(0.0)) {
        return None;
    }
    let u: T = c(rng.gen::<f64>());
    let size_units = params.task_units_min + u * (params.task_units_max - params.task_units_min);
    let size_bits = size_units * c::<T>(1000.0);
    let workload_cycles = size_bits * params.cycles_per_bit;

    let gamma = &params.gamma;
    let s = gamma.len();
    let ratio = if s >= 2 {
        gamma[s - 1] / gamma[s - 2]
    } else {
        c(2.0)
    };
    let lo = gamma[0];
    let hi = gamma[s - 1] * ratio.max(T::one() + c(1e-9));
    let v: T = c(rng.gen::<f64>());
    let deadline = (lo.ln() + v * (hi.ln() - lo.ln())).exp();

    let resource_demand = params
        .demand_max
        .iter()
        .map(|m| *m * c(rng.gen::<f64>()))
        .collect();

    let h = delay_class(deadline, gamma);
    Some(TaskSpec {
        size_units,
        size_bits,
        workload_cycles,
        deadline,
        resource_demand,
        delay_class: h,
    })
}

/// Delay-queue recursion for one class:
/// `Q' = max(Q - zeta, 0) + alpha * workload / f_local * 1{class matches}`.
pub fn update_delay_queue<T: Real>(
    q_s: T,
    zeta: T,
    alpha: T,
    workload_cycles: T,
    class_matches: bool,
    f_local: T,
) -> Result<T, ZeroFrequency> {
    let drained = pos(q_s - zeta);
    if alpha <= T::zero() {
        return Ok(drained);
    }
    if f_local <= T::zero() {
        return Err(ZeroFrequency);
    }
    let added = if class_matches {
        alpha * workload_cycles / f_local
    } else {
        T::zero()
    };
    Ok(drained + added)
}

/// Virtual-queue recursion: `W' = max(W + Q' - Gamma_s, 0)`.
pub fn update_virtual_queue<T: Real>(w_s: T, q_s_next: T, gamma_s: T) -> T {
    pos(w_s + q_s_next - gamma_s)
}

/// Local, server, and total delay of one task under a split decision.
///
/// The dropped fraction contributes no delay. With `alpha = 0` the total is
/// the served share's server time `beta * workload / f_server`; otherwise it
/// is `max(Q_prev + D_local, D_server)`.
pub fn exec_times<T: Real>(
    workload_cycles: T,
    alpha: T,
    beta: T,
    f_local: T,
    f_server: T,
    q_prev: T,
) -> Result<(T, T, T), ZeroFrequency> {
    if alpha > T::zero() && f_local <= T::zero() {
        return Err(ZeroFrequency);
    }
    if beta > T::zero() && f_server <= T::zero() {
        return Err(ZeroFrequency);
    }
    let d_local = if alpha > T::zero() {
        alpha * workload_cycles / f_local
    } else {
        T::zero()
    };
    let d_server = if beta > T::zero() {
        beta * workload_cycles / f_server
    } else {
        T::zero()
    };
    let d_total = if alpha <= T::zero() {
        d_server
    } else {
        (q_prev + d_local).max(d_server)
    };
    Ok((d_local, d_server, d_total))
}

/// Local execution energy `kappa * alpha * f_local * workload`.
pub fn local_energy<T: Real>(alpha: T, workload_cycles: T, f_local: T, kappa: T) -> T {
    kappa * alpha * f_local * workload_cycles
}

/// Server execution energy `kappa * beta * f_server * workload`.
pub fn server_energy<T: Real>(beta: T, workload_cycles: T, f_server: T, kappa: T) -> T {
    kappa * beta * f_server * workload_cycles
}

#[derive(Debug, Error, PartialEq)]
pub enum BatteryError<T: Real> {
    #[error("battery extraction {extraction} exceeds storage {battery}")]
    ExtractionExceedsStorage { extraction: T, battery: T },
    #[error("grid purchase {grid} exceeds the energy deficit {deficit}")]
    GridExceedsDeficit { grid: T, deficit: T },
}

/// Battery dynamics: `B' = B - eta_minus * ((sum_n - u)^+ - g) + eta_plus * c`.
///
/// The extraction must satisfy energy causality (`0 <= extraction <= B`);
/// a violation is a hard simulation fault, not a recoverable state.
pub fn update_battery<T: Real>(
    battery: T,
    renewable: T,
    sum_n: T,
    grid: T,
    charge: T,
    eta_charge: T,
    eta_discharge: T,
) -> Result<T, BatteryError<T>> {
    let deficit = pos(sum_n - renewable);
    // Tiny negative slack absorbs float rounding in deficit - grid.
    let slack = deficit.abs().max(T::one()) * c(1e-12);
    if grid > deficit + slack {
        return Err(BatteryError::GridExceedsDeficit { grid, deficit });
    }
    let delivered = pos(deficit - grid);
    let extraction = eta_discharge * delivered;
    if extraction > battery {
        return Err(BatteryError::ExtractionExceedsStorage {
            extraction,
            battery,
        });
    }
    Ok(battery - extraction + eta_charge * charge)
}

/// Fixtures shared by unit tests across the crate.
#[cfg(test)]
pub(crate) mod tests_support {
    use super::*;

    pub fn params_for_tests() -> SimParams<f64> {
        SimParams {
            vehicles: 2,
            arrival_prob: 0.6,
            task_units_min: 10.0,
            task_units_max: 20.0,
            cycles_per_bit: 1000.0,
            slot_seconds: 1e-3,
            gamma: vec![2e-3, 4e-3, 8e-3, 16e-3],
            f_local_max: vec![2e9; 4],
            kappa: 1e-28,
            v_weight: 1e8,
            drop_loss_per_cycle: 1e-18,
            tau_d: 1e-3,
            h_weight: 200.0,
            eta_charge: 0.95,
            eta_discharge: 1.2,
            e_max: 5e-8,
            c_max: 1.3e-6,
            u_max: 2e-9,
            omega: vec![12.0, 12.0],
            demand_max: vec![1.0, 1.0],
            g_max: 8e-7,
            dual_step: 5e-12,
            dual_tolerance: 1e-13,
            dual_max_iters: 100,
            t_slots: 100,
            seed: 42,
            battery_init: 7e-8,
            f_server_max: 8e10,
            nu_max: 1e-10,
            p2_energy_term: P2EnergyTerm::AlphaVariant,
            dual_update_sign: DualUpdateSign::Ascent,
            lambda2_t_factor: 1.0,
            stackelberg_inner_rounds: 1,
        }
    }

    /// A task pinned to a delay class with its deadline at the class bound.
    pub fn task_in_class(units: f64, class: usize, params: &SimParams<f64>) -> TaskSpec<f64> {
        TaskSpec {
            size_units: units,
            size_bits: units * 1000.0,
            workload_cycles: params.workload_cycles(units),
            deadline: params.gamma[class - 1],
            resource_demand: vec![0.5; params.resources()],
            delay_class: class,
        }
    }
}

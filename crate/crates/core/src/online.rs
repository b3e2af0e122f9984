//! Online play under a sequentially revealed cost schedule: padding the
//! unknown tail, predicting the feedback Nash equilibrium, tracking the
//! prediction, and measuring the price of uncertainty (PoU).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{solve_feedback_nash, CostSchedule, GameSpec, NashSolution, Player};
use crate::linalg::{spectral_radius_est, vec_add, vec_norm, vec_sub, Mat, Tolerances};

/// Cost schedule seen at step t with preview W: matrices up to the
/// last-known stage k = min(t + W, T − 1) are exact, later ones repeat
/// stage k (Q_{k+1} for the state weight, R_k for the control weights).
#[derive(Debug, Clone, PartialEq)]
pub struct PaddedSchedule {
    pub t: usize,
    pub preview: usize,
    pub last_known: usize,
    pub costs: CostSchedule,
}

/// Padded schedule whose last exactly known control stage is `k`.
pub fn padded_costs(costs: &CostSchedule, k: usize) -> Result<CostSchedule> {
    let stages = costs.stages();
    if k == 0 || k > stages {
        return Err(Error::IndexOutOfRange(format!("last-known stage {k} not in 1..={stages}")));
    }
    let q = (1..=stages).map(|tau| costs.q(tau.min(k) + 1).clone()).collect();
    let r = |p| (1..=stages).map(|tau| costs.r(p, tau.min(k)).clone()).collect();
    CostSchedule::new(q, r(Player::One), r(Player::Two))
}

pub fn pad_schedule(costs: &CostSchedule, t: usize, preview: usize) -> Result<PaddedSchedule> {
    let stages = costs.stages();
    if t == 0 || t > stages {
        return Err(Error::IndexOutOfRange(format!("step {t} not in 1..={stages}")));
    }
    let last_known = t.saturating_add(preview).min(stages);
    Ok(PaddedSchedule {
        t,
        preview,
        last_known,
        costs: padded_costs(costs, last_known)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackingGain {
    pub gain: Mat,
    pub spectral_radius: f64,
    pub iterations: usize,
}

const TRACKING_MAX_ITER: usize = 10_000;
const TRACKING_CONVERGENCE: f64 = 1e-10;

/// Stabilizing joint gain K̄ from the identity-weighted time-invariant
/// Riccati iteration
///   K = −(I + 𝐁ᵀP𝐁)⁻¹𝐁ᵀPA,  P ← I + KᵀK + (A + 𝐁K)ᵀP(A + 𝐁K),
/// started at P = I. Fails unless ρ(A + 𝐁K̄) < 1 − spectral margin.
pub fn compute_tracking_gain(spec: &GameSpec, tol: &Tolerances) -> Result<TrackingGain> {
    let a = spec.a();
    let b = spec.b_joint();
    let bt = b.transpose();
    let (n, cm) = (spec.n(), 2 * spec.m());
    let gain_for = |p: &Mat| -> Result<Mat> {
        let lhs = Mat::identity(cm).try_add(&p.congruence(b)?)?;
        Ok(-&lhs.solve(&bt.matmul(p)?.matmul(a)?)?)
    };
    let mut p = Mat::identity(n);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < TRACKING_MAX_ITER {
        iterations += 1;
        let k = gain_for(&p)?;
        let closed = a.try_add(&b.matmul(&k)?)?;
        let next = Mat::identity(n)
            .try_add(&k.transpose().matmul(&k)?)?
            .try_add(&p.congruence(&closed)?)?
            .symmetrize();
        if !next.is_finite() {
            return Err(Error::NotStabilizable("Riccati iterate diverged".into()));
        }
        let change = next.try_sub(&p)?.max_abs();
        let scale = next.max_abs().max(1.0);
        p = next;
        if change < TRACKING_CONVERGENCE * scale {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NotStabilizable(format!(
            "Riccati iteration did not converge in {TRACKING_MAX_ITER} steps"
        )));
    }
    let gain = gain_for(&p)?;
    let spectral_radius = spectral_radius_est(&a.try_add(&b.matmul(&gain)?)?)?;
    if spectral_radius >= 1.0 - tol.spectral_margin {
        return Err(Error::NotStabilizable(format!(
            "closed-loop spectral radius {spectral_radius} is not below one"
        )));
    }
    Ok(TrackingGain {
        gain,
        spectral_radius,
        iterations,
    })
}

/// Feedback Nash equilibrium of the game padded at (t, W), re-solved from
/// the original initial state.
pub fn predict_nash(spec: &GameSpec, t: usize, preview: usize, tol: &Tolerances) -> Result<NashSolution> {
    let padded = pad_schedule(spec.costs(), t, preview)?;
    solve_feedback_nash(&spec.with_costs(padded.costs)?, tol)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pou {
    pub pou: f64,
    pub nash_social_cost: f64,
}

/// Player-i cost gap J_i(run) − J_i(Nash) accumulated stage by stage as
///   Σₜ δₜᵀHδₜ + 2δₜᵀ(HKₜ + 𝐁ᵀPⁱ_{t+1}A)xₜ,  H = Rₜⁱ + 𝐁ᵀPⁱ_{t+1}𝐁,
/// where δₜ = uₜ − Kₜxₜ is the departure from the equilibrium feedback at
/// the realised state. Exact for quadratic costs and free of the
/// cancellation of subtracting two nearly equal totals.
fn cost_gap(
    spec: &GameSpec,
    nash: &NashSolution,
    player: Player,
    states: &[Vec<f64>],
    controls: &[Vec<f64>],
) -> Result<f64> {
    let a = spec.a();
    let b = spec.b_joint();
    let mut gap = 0.0;
    for t in 1..spec.horizon() {
        let x = &states[t - 1];
        let k = nash.gain(t);
        let delta = vec_sub(&controls[t - 1], &k.matvec(x)?);
        if delta.iter().all(|&d| d == 0.0) {
            continue;
        }
        let p = nash.p(player, t + 1);
        let h = spec.costs().r(player, t).try_add(&p.congruence(b)?)?;
        let lin = h.matmul(k)?.try_add(&b.transpose().matmul(p)?.matmul(a)?)?;
        gap += h.quad_form(&delta)? + 2.0 * crate::linalg::dot(&delta, &lin.matvec(x)?);
    }
    Ok(gap)
}

fn pou_against(spec: &GameSpec, nash: &NashSolution, states: &[Vec<f64>], controls: &[Vec<f64>]) -> Result<Pou> {
    let t_len = spec.horizon();
    if states.len() != t_len || controls.len() != t_len - 1 {
        return Err(Error::DimensionMismatch(format!(
            "{} states and {} controls for T={t_len}",
            states.len(),
            controls.len()
        )));
    }
    let mut pou = 0.0;
    let mut social = 0.0;
    for player in Player::BOTH {
        pou += cost_gap(spec, nash, player, states, controls)?;
        social += crate::game::evaluate_cost(spec, player, &nash.states, &nash.controls)?;
    }
    Ok(Pou {
        pou: 0.5 * pou,
        nash_social_cost: 0.5 * social,
    })
}

/// PoU = ½ Σᵢ [Jᵢ(run) − Jᵢ(Nash)] and the Nash social cost ½ Σᵢ Jᵢ(Nash).
pub fn compute_pou(spec: &GameSpec, states: &[Vec<f64>], controls: &[Vec<f64>], tol: &Tolerances) -> Result<Pou> {
    let nash = solve_feedback_nash(spec, tol)?;
    pou_against(spec, &nash, states, controls)
}

/// ln |pou / nash_social_cost|; `None` when pou is exactly zero.
pub fn log_rel_pou(pou: f64, nash_social_cost: f64) -> Result<Option<f64>> {
    if nash_social_cost == 0.0 {
        return Err(Error::ZeroNashCost);
    }
    if pou == 0.0 {
        return Ok(None);
    }
    Ok(Some((pou / nash_social_cost).abs().ln()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnlineRun {
    pub preview: usize,
    /// Realised states x₁..x_T.
    pub x: Vec<Vec<f64>>,
    /// Realised joint controls u₁..u_{T−1}.
    pub u: Vec<Vec<f64>>,
    /// Entry t−1 is the trajectory x_{·|t} predicted at step t.
    pub x_pred: Vec<Vec<Vec<f64>>>,
    /// Entry t−1 is the control sequence u_{·|t} predicted at step t.
    pub u_pred: Vec<Vec<Vec<f64>>>,
    #[serde(rename = "K_tracking")]
    pub k_tracking: Mat,
    pub pou: f64,
    pub log_rel_pou: Option<f64>,
    pub nash_cost_avg: f64,
    /// ‖xₜ − x_{t|t}‖ for t = 1..T−1.
    pub tracking_error: Vec<f64>,
}

impl OnlineRun {
    /// The tracking control K̄(xₜ − x_{t|t}) + u_{t|t} for step t.
    pub fn policy(&self, t: usize) -> Result<Vec<f64>> {
        let x = &self.x[t - 1];
        let xp = &self.x_pred[t - 1][t - 1];
        let up = &self.u_pred[t - 1][t - 1];
        Ok(vec_add(&self.k_tracking.matvec(&vec_sub(x, xp))?, up))
    }
}

/// Plays the game online with preview W: at each step re-solve the padded
/// game from x̄₁, then apply uₜ = K̄(xₜ − x_{t|t}) + u_{t|t}.
///
/// Predictions depend on (t, W) only through the last-known stage, so each
/// distinct padded game is solved once.
pub fn run_online(
    spec: &GameSpec,
    preview: usize,
    k_tracking: Option<&Mat>,
    tol: &Tolerances,
) -> Result<OnlineRun> {
    let stages = spec.horizon() - 1;
    let k_bar = match k_tracking {
        Some(k) if k.shape() == (2 * spec.m(), spec.n()) => k.clone(),
        Some(k) => {
            return Err(Error::DimensionMismatch(format!(
                "tracking gain is {}x{}, expected {}x{}",
                k.rows(),
                k.cols(),
                2 * spec.m(),
                spec.n()
            )))
        }
        None => compute_tracking_gain(spec, tol)?.gain,
    };

    let mut cache: Vec<Option<NashSolution>> = vec![None; stages + 1];
    let mut predicted = |k: usize| -> Result<NashSolution> {
        if cache[k].is_none() {
            let padded = spec.with_costs(padded_costs(spec.costs(), k)?)?;
            cache[k] = Some(solve_feedback_nash(&padded, tol)?);
        }
        Ok(cache[k].clone().expect("just filled"))
    };

    let mut x = vec![spec.x1().to_vec()];
    let mut u = Vec::with_capacity(stages);
    let mut x_pred = Vec::with_capacity(stages);
    let mut u_pred = Vec::with_capacity(stages);
    let mut tracking_error = Vec::with_capacity(stages);
    for t in 1..=stages {
        let pred = predicted(t.saturating_add(preview).min(stages))?;
        let xt = x.last().expect("non-empty");
        let dev = vec_sub(xt, &pred.states[t - 1]);
        tracking_error.push(vec_norm(&dev));
        let ut = vec_add(&k_bar.matvec(&dev)?, &pred.controls[t - 1]);
        let next = spec.step(xt, &ut)?;
        x.push(next);
        u.push(ut);
        x_pred.push(pred.states);
        u_pred.push(pred.controls);
    }

    let nash = predicted(stages)?;
    let Pou { pou, nash_social_cost } = pou_against(spec, &nash, &x, &u)?;
    Ok(OnlineRun {
        preview,
        x,
        u,
        x_pred,
        u_pred,
        k_tracking: k_bar,
        pou,
        log_rel_pou: log_rel_pou(pou, nash_social_cost)?,
        nash_cost_avg: nash_social_cost,
        tracking_error,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainGap {
    pub t: usize,
    pub gap: f64,
}

/// ‖K_{t|t} − Kₜ‖₂ for t = 1..T−1: the stage-t gain predicted at step t
/// against the full-information stage-t gain.
pub fn gain_decay_diagnostic(spec: &GameSpec, preview: usize, tol: &Tolerances) -> Result<Vec<GainGap>> {
    let stages = spec.horizon() - 1;
    let full = solve_feedback_nash(spec, tol)?;
    let mut out = Vec::with_capacity(stages);
    for t in 1..=stages {
        let k = t.saturating_add(preview).min(stages);
        let gap = if k == stages {
            0.0
        } else {
            let padded = spec.with_costs(padded_costs(spec.costs(), k)?)?;
            let pred = solve_feedback_nash(&padded, tol)?;
            pred.gain(t).try_sub(full.gain(t))?.norm2()?
        };
        out.push(GainGap { t, gap });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{default_recharge_game, scalar_instance};
    use crate::game::evaluate_cost;

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    fn labelled_schedule(t_len: usize) -> CostSchedule {
        // Q_s = diag(s), R_t = diag(t, t) so that indices are visible
        let q = (2..=t_len).map(|s| Mat::diag(&[s as f64])).collect();
        let r = (1..t_len).map(|t| Mat::diag(&[t as f64, t as f64])).collect::<Vec<_>>();
        CostSchedule::new(q, r.clone(), r).unwrap()
    }

    fn q_labels(c: &CostSchedule) -> Vec<f64> {
        c.q_list().iter().map(|q| q[(0, 0)]).collect()
    }

    fn r_labels(c: &CostSchedule) -> Vec<f64> {
        c.r_list(Player::One).iter().map(|r| r[(0, 0)]).collect()
    }

    #[test]
    fn padding_examples() {
        let base = labelled_schedule(4);
        let p = pad_schedule(&base, 1, 1).unwrap();
        assert_eq!(q_labels(&p.costs), vec![2.0, 3.0, 3.0]);
        assert_eq!(r_labels(&p.costs), vec![1.0, 2.0, 2.0]);

        let p = pad_schedule(&labelled_schedule(3), 1, 0).unwrap();
        assert_eq!(q_labels(&p.costs), vec![2.0, 2.0]);
        assert_eq!(r_labels(&p.costs), vec![1.0, 1.0]);

        for (t, w) in [(1, 2), (2, 1), (3, 0), (2, 7)] {
            assert_eq!(pad_schedule(&base, t, w).unwrap().costs, base);
        }
        assert!(pad_schedule(&base, 0, 1).is_err());
        assert!(pad_schedule(&base, 4, 1).is_err());
    }

    #[test]
    fn padding_depends_only_on_last_known_stage() {
        let base = labelled_schedule(8);
        let a = pad_schedule(&base, 2, 3).unwrap();
        let b = pad_schedule(&base, 3, 2).unwrap();
        assert_eq!(a.costs, b.costs);
    }

    #[test]
    fn tracking_gain_examples() {
        let zero = GameSpec::new(
            Mat::zeros(1, 1),
            Mat::identity(1),
            Mat::identity(1),
            vec![1.0],
            scalar_instance(1.0).costs().clone(),
        )
        .unwrap();
        let tg = compute_tracking_gain(&zero, &tol()).unwrap();
        assert_eq!(tg.gain.max_abs(), 0.0);
        assert_eq!(tg.spectral_radius, 0.0);

        let tg = compute_tracking_gain(&scalar_instance(1.0), &tol()).unwrap();
        assert!(tg.spectral_radius < 1.0);
        // scalar DARE with a = 1, B = [1 1], unit weights: p² − p − 1/2 = 0
        let p = (1.0 + 3f64.sqrt()) / 2.0;
        assert!((tg.gain[(0, 0)] + p / (1.0 + 2.0 * p)).abs() < 1e-9);

        let game = default_recharge_game(&[10.0], &[50.0], &[-20.0], [1.0, 1.0]);
        assert!(compute_tracking_gain(&game, &tol()).unwrap().spectral_radius < 1.0);
    }

    #[test]
    fn uncontrollable_unstable_mode_is_rejected() {
        let a = Mat::diag(&[2.0, 0.5]);
        let b = Mat::from_rows(&[vec![0.0], vec![1.0]]).unwrap();
        let r = Mat::identity(2);
        let costs = CostSchedule::new(vec![Mat::identity(2)], vec![r.clone()], vec![r]).unwrap();
        let spec = GameSpec::new(a, b.clone(), b, vec![1.0, 1.0], costs).unwrap();
        assert!(matches!(
            compute_tracking_gain(&spec, &tol()),
            Err(Error::NotStabilizable(_))
        ));
    }

    fn three_stage_scalar() -> GameSpec {
        let one = Mat::identity(1);
        let costs = CostSchedule::new(
            vec![Mat::diag(&[1.0]), Mat::diag(&[4.0])],
            vec![Mat::diag(&[1.0, 0.0]); 2],
            vec![Mat::diag(&[0.0, 1.0]); 2],
        )
        .unwrap();
        GameSpec::new(one.clone(), one.clone(), one, vec![1.0], costs).unwrap()
    }

    #[test]
    fn prediction_examples() {
        let spec = three_stage_scalar();
        let full = solve_feedback_nash(&spec, &tol()).unwrap();
        let pred = predict_nash(&spec, 1, 0, &tol()).unwrap();
        assert!(pred.gain(2).try_sub(full.gain(2)).unwrap().max_abs() > 1e-3);
        // stage-2 oracle: one remaining stage with weight q → K₂ = −q/(1+2q)
        assert!((full.gain(2)[(0, 0)] + 4.0 / 9.0).abs() < 1e-15);
        assert!((pred.gain(2)[(0, 0)] + 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(predict_nash(&spec, 1, 1, &tol()).unwrap(), full);
        assert_eq!(predict_nash(&spec, 2, 0, &tol()).unwrap(), full);
    }

    #[test]
    fn time_invariant_prediction_is_exact() {
        let game = default_recharge_game(&[30.0; 5], &[40.0; 5], &[-20.0; 5], [1.0, 1.0]);
        let full = solve_feedback_nash(&game, &tol()).unwrap();
        for t in 1..5 {
            for w in 0..4 {
                assert_eq!(predict_nash(&game, t, w, &tol()).unwrap(), full);
            }
        }
    }

    #[test]
    fn pou_examples() {
        let spec = scalar_instance(1.0);
        let nash = solve_feedback_nash(&spec, &tol()).unwrap();
        let at_nash = compute_pou(&spec, &nash.states, &nash.controls, &tol()).unwrap();
        assert_eq!(at_nash.pou, 0.0);
        assert!((at_nash.nash_social_cost - 2.0 / 9.0).abs() < 1e-15);

        let u = vec![vec![0.0, 0.0]];
        let x = crate::game::simulate(&spec, &u).unwrap();
        let p = compute_pou(&spec, &x, &u, &tol()).unwrap();
        assert!((p.pou - 7.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn staged_gap_equals_direct_difference() {
        let spec = three_stage_scalar();
        let nash = solve_feedback_nash(&spec, &tol()).unwrap();
        let u = vec![vec![-0.2, 0.1], vec![0.3, -0.05]];
        let x = crate::game::simulate(&spec, &u).unwrap();
        let p = compute_pou(&spec, &x, &u, &tol()).unwrap();
        let direct: f64 = Player::BOTH
            .iter()
            .map(|&i| {
                evaluate_cost(&spec, i, &x, &u).unwrap() - evaluate_cost(&spec, i, &nash.states, &nash.controls).unwrap()
            })
            .sum::<f64>()
            / 2.0;
        assert!((p.pou - direct).abs() < 1e-14);
    }

    #[test]
    fn log_rel_examples() {
        assert_eq!(log_rel_pou(2.0, 2.0).unwrap(), Some(0.0));
        let v = log_rel_pou(7.0 / 9.0, 2.0 / 9.0).unwrap().unwrap();
        assert!((v - 3.5f64.ln()).abs() < 1e-15 && (v - 1.2528).abs() < 1e-4);
        assert_eq!(log_rel_pou(0.0, 1.0).unwrap(), None);
        assert!((log_rel_pou(-0.5, 1.0).unwrap().unwrap() - 0.5f64.ln()).abs() < 1e-15);
        assert!(matches!(log_rel_pou(1.0, 0.0), Err(Error::ZeroNashCost)));
    }

    #[test]
    fn full_preview_has_zero_pou() {
        let spec = three_stage_scalar();
        let run = run_online(&spec, 2, None, &tol()).unwrap();
        assert!(run.pou.abs() <= 1e-9 * run.nash_cost_avg.max(1.0));
        assert!(run.tracking_error.iter().all(|&e| e == 0.0));
        assert_eq!(run.log_rel_pou, None);
    }

    #[test]
    fn short_preview_tracks_and_pays() {
        let spec = three_stage_scalar();
        let run = run_online(&spec, 0, None, &tol()).unwrap();
        assert_eq!(run.x[0], spec.x1());
        assert_eq!(run.tracking_error[0], 0.0);
        assert!(run.pou > 0.0);
        for t in 1..=2 {
            assert_eq!(run.policy(t).unwrap(), run.u[t - 1]);
        }
        let again = run_online(&spec, 0, None, &tol()).unwrap();
        assert_eq!(run, again);
    }

    #[test]
    fn user_gain_is_used_and_checked() {
        let spec = three_stage_scalar();
        let k = Mat::from_rows(&[vec![-0.4], vec![-0.4]]).unwrap();
        let run = run_online(&spec, 0, Some(&k), &tol()).unwrap();
        assert_eq!(run.k_tracking, k);
        assert!(run_online(&spec, 0, Some(&Mat::zeros(1, 1)), &tol()).is_err());
    }

    #[test]
    fn decay_diagnostic_examples() {
        let constant = default_recharge_game(&[30.0; 6], &[40.0; 6], &[-20.0; 6], [1.0, 1.0]);
        for w in 0..3 {
            assert!(gain_decay_diagnostic(&constant, w, &tol()).unwrap().iter().all(|g| g.gap == 0.0));
        }
        let spec = three_stage_scalar();
        let gaps = gain_decay_diagnostic(&spec, 0, &tol()).unwrap();
        assert_eq!(gaps.len(), 2);
        assert!(gaps[0].gap > 0.0);
        assert_eq!(gaps[1].gap, 0.0);
    }
}

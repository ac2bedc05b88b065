use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    generate_synthetic, load_csv, sample_outside_margin, Anchor, DataSource, ExperimentConfig, Record, Report, Suite,
    WorkbenchError,
};
use crate::loss::{LossKind, LossSpec};
use crate::optim::{SolverConfig, Weights};
use crate::responsibility::{
    in_constraint_set, outside_margin_condition, quadratic_improvement_condition, recover_q, FeasibilityVerdict,
    ResponsibilityError, Rule,
};
use crate::risk::{
    fit_semi, fit_supervised, risk_difference, semi_stationarity_residual, LabeledDataset, RiskConfig,
    UnlabeledDataset,
};
use crate::safe_learner::{
    adversary_max, construct_qnew, minimax_fit, minimax_fit_quadratic, supervised_gap, AdversaryMode,
    MinimaxResult, SafeLearnerError, MAX_EXHAUSTIVE,
};

const PERTURBATIONS: usize = 10;
const OUTSIDE_MARGIN: f64 = 1.05;

type Outcome = Result<(), String>;

struct Instance<'a> {
    index: usize,
    loss: &'a LossSpec,
    cfg: RiskConfig,
    solver: SolverConfig,
    data: LabeledDataset,
    unl: UnlabeledDataset,
    w_sup: Weights,
    source: &'a DataSource,
    rng: ChaCha8Rng,
}

/// Runs the selected verification suite on every instance.
///
/// Configuration and data problems are errors; failed checks and module
/// errors inside an instance are recorded in the report.
pub fn run_suite(config: &ExperimentConfig) -> Result<Report, WorkbenchError> {
    let loss: LossSpec = config
        .loss
        .parse()
        .map_err(|e: crate::loss::LossError| WorkbenchError::Config(e.to_string()))?;
    let cfg = RiskConfig::new(config.lambda)?;
    config
        .solver
        .validate()
        .map_err(|e| WorkbenchError::Config(e.to_string()))?;
    let datasets = match &config.source {
        DataSource::Synthetic(spec) => {
            spec.validate()?;
            (0..config.instances.max(1))
                .map(|i| {
                    let mut rng = instance_rng(config.seed, i);
                    generate_synthetic(spec, &mut rng).map(|(d, u)| (d, u, rng))
                })
                .collect::<Result<Vec<_>, _>>()?
        }
        DataSource::Csv(path) => {
            let (d, u) = load_csv(path)?;
            if u.is_empty() {
                return Err(WorkbenchError::Config(format!("{} has no unlabeled rows", path.display())));
            }
            vec![(d, u, instance_rng(config.seed, 0))]
        }
    };

    let mut records = Vec::new();
    for (index, (data, unl, rng)) in datasets.into_iter().enumerate() {
        let w_sup = match fit_supervised(&loss, &data, &cfg, &config.solver) {
            Ok(w) => w,
            Err(e) => {
                let mut r = Record::new(config.suite, index, "supervised");
                r.error = Some(format!("supervised fit: {e}"));
                records.push(r);
                continue;
            }
        };
        let mut inst = Instance {
            index,
            loss: &loss,
            cfg,
            solver: config.solver,
            data,
            unl,
            w_sup,
            source: &config.source,
            rng,
        };
        let suites: &[Suite] = match config.suite {
            Suite::All => &[Suite::Recover, Suite::Adversary, Suite::Minimax, Suite::Conditions],
            ref one => std::slice::from_ref(one),
        };
        for suite in suites {
            match suite {
                Suite::Recover => records.push(recover_suite(&inst)),
                Suite::Adversary => records.extend(adversary_suite(&mut inst)),
                Suite::Minimax => records.extend(minimax_suite(&mut inst)),
                Suite::Conditions => records.push(conditions_suite(&inst)),
                Suite::All => unreachable!(),
            }
        }
    }
    Ok(Report::new(config.clone(), records))
}

/// Random stream of instance `index`; synthetic data are drawn from it first.
pub fn instance_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

fn record_outcome(record: &mut Record, outcome: Outcome) {
    if let Err(e) = outcome {
        record.error = Some(e);
    }
}

fn recover_suite(inst: &Instance) -> Record {
    let mut rec = Record::new(Suite::Recover, inst.index, "base");
    rec.w_sup = Some(inst.w_sup.clone());
    let outcome = (|| {
        let recovery = recover_q(inst.loss, &inst.w_sup, &inst.unl).map_err(|e| format!("recover_q: {e}"))?;
        let q = recovery.q.clone();
        rec.recovery = Some(recovery);
        if inst.loss.is_decreasing() {
            rec.check(
                "every object has a feasible responsibility",
                Anchor::RecoveryOfSupervisedSolution,
                q.is_some(),
                String::new(),
            );
        }
        let Some(q) = q else {
            rec.notes.push("no per-object recovery; some responsibility is infeasible".into());
            return Ok(());
        };
        let w = fit_semi(inst.loss, &inst.data, &inst.unl, &q, &inst.cfg, &inst.solver)
            .map_err(|e| format!("fit_semi: {e}"))?;
        let diff = w.max_abs_diff(&inst.w_sup);
        rec.check(
            "semi-supervised fit at recovered responsibilities equals w_sup",
            Anchor::RecoveryOfSupervisedSolution,
            diff < 1e-6,
            format!("max abs difference {diff:.3e}"),
        );
        let res = semi_stationarity_residual(inst.loss, &inst.w_sup, &inst.data, &inst.unl, &q, &inst.cfg)
            .map_err(|e| format!("stationarity: {e}"))?;
        rec.check(
            "semi-supervised gradient vanishes at w_sup",
            Anchor::RecoveryOfSupervisedSolution,
            res < 1e-8,
            format!("residual {res:.3e}"),
        );
        Ok(())
    })();
    record_outcome(&mut rec, outcome);
    rec
}

/// Random direction with norm log-uniform in `[1e-3, 1]`.
pub(crate) fn perturbation<R: Rng>(rng: &mut R, d: usize) -> DVector<f64> {
    let dir = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));
    let norm = 10f64.powf(rng.random_range(-3.0..=0.0));
    dir.normalize() * norm
}

fn adversary_suite(inst: &mut Instance) -> Vec<Record> {
    let d = inst.data.dim();
    (0..PERTURBATIONS)
        .map(|k| {
            let delta = perturbation(&mut inst.rng, d);
            let mut rec = Record::new(Suite::Adversary, inst.index, &format!("perturbation-{k}"));
            rec.w_sup = Some(inst.w_sup.clone());
            let w = Weights::new(inst.w_sup.as_vector() + &delta);
            let outcome = adversary_checks(inst, &w, &mut rec);
            record_outcome(&mut rec, outcome);
            rec
        })
        .collect()
}

fn adversary_checks(inst: &Instance, w: &Weights, rec: &mut Record) -> Outcome {
    let (loss, data, unl, cfg) = (inst.loss, &inst.data, &inst.unl, &inst.cfg);
    let soft =
        adversary_max(loss, w, &inst.w_sup, data, unl, cfg, AdversaryMode::Soft).map_err(|e| format!("adversary: {e}"))?;
    if unl.len() <= MAX_EXHAUSTIVE {
        let hard = adversary_max(loss, w, &inst.w_sup, data, unl, cfg, AdversaryMode::Hard)
            .map_err(|e| format!("adversary: {e}"))?;
        let gap = (hard.value - soft.value).abs();
        rec.check(
            "hard and soft worst cases agree",
            Anchor::VertexAttainment,
            gap <= 1e-12,
            format!("|hard - soft| = {gap:.3e}"),
        );
    }
    if loss.is_decreasing() {
        rec.check(
            "perturbed classifier has positive worst-case difference",
            Anchor::HardLabelImpossibility,
            soft.value > 0.0,
            format!("worst case {:.6e}", soft.value),
        );
        let q = construct_qnew(loss, w, &inst.w_sup, unl).map_err(|e| format!("construct_qnew: {e}"))?;
        let dq = risk_difference(loss, w, &inst.w_sup, data, unl, &q, cfg).map_err(|e| e.to_string())?;
        let m = supervised_gap(loss, w, &inst.w_sup, data, cfg).map_err(|e| e.to_string())?;
        rec.check(
            "constructed labeling gives a difference of at least the supervised gap",
            Anchor::HardLabelImpossibility,
            dq > 0.0 && dq >= m - 1e-10,
            format!("difference {dq:.6e}, supervised gap {m:.6e}"),
        );
    }
    rec.adversary = Some(soft);
    Ok(())
}

fn run_minimax(inst: &Instance, unl: &UnlabeledDataset, rec: &mut Record) -> Result<MinimaxResult, String> {
    match minimax_fit(inst.loss, &inst.data, unl, &inst.cfg, &inst.solver) {
        Ok(r) => {
            rec.check(
                "duality gap within the saddle tolerance",
                Anchor::MinimaxMaximinEquality,
                true,
                format!("gap {:.3e}", r.duality_gap),
            );
            Ok(r)
        }
        Err(SafeLearnerError::SaddleQuality { gap, result }) => {
            rec.check(
                "duality gap within the saddle tolerance",
                Anchor::MinimaxMaximinEquality,
                false,
                format!("gap {gap:.3e}"),
            );
            Ok(*result)
        }
        Err(e) => Err(format!("minimax_fit: {e}")),
    }
}

fn minimax_checks(inst: &Instance, unl: &UnlabeledDataset, rec: &mut Record) -> Outcome {
    let (loss, data, cfg) = (inst.loss, &inst.data, &inst.cfg);
    let r = run_minimax(inst, unl, rec)?;
    rec.check(
        "minimax value is not positive",
        Anchor::PessimisticValueCeiling,
        r.value <= 1e-10,
        format!("value {:.6e}", r.value),
    );
    let mode = if unl.len() <= MAX_EXHAUSTIVE { AdversaryMode::Hard } else { AdversaryMode::Soft };
    let adv = adversary_max(loss, &r.w_semi, &inst.w_sup, data, unl, cfg, mode).map_err(|e| format!("adversary: {e}"))?;
    rec.check(
        "no labeling makes the minimax classifier worse than w_sup",
        Anchor::PessimisticValueCeiling,
        adv.value <= 1e-8,
        format!("worst case {:.6e}", adv.value),
    );
    if loss.is_decreasing() {
        let diff = r.w_semi.max_abs_diff(&inst.w_sup);
        rec.check(
            "minimax learner returns w_sup with zero value",
            Anchor::SoftLabelImpossibility,
            (-1e-9..=1e-10).contains(&r.value) && diff < 1e-6,
            format!("value {:.3e}, distance {diff:.3e}", r.value),
        );
    }
    if !loss.is_piecewise_linear() {
        rec.check(
            "duality gap below 1e-6 for a smooth loss",
            Anchor::MinimaxMaximinEquality,
            r.duality_gap < 1e-6,
            format!("gap {:.3e}", r.duality_gap),
        );
    }
    if loss.kind() == LossKind::Quadratic {
        let exact = minimax_fit_quadratic(data, unl, cfg).map_err(|e| format!("quadratic minimax: {e}"))?;
        let diff = (exact.value - r.value).abs();
        rec.check(
            "generic and closed-form quadratic minimax agree",
            Anchor::MinimaxMaximinEquality,
            diff < 1e-6,
            format!("|difference| {diff:.3e}"),
        );
        rec.check(
            "closed-form minimax equals maximin",
            Anchor::MinimaxMaximinEquality,
            exact.duality_gap < 1e-6,
            format!("gap {:.3e}", exact.duality_gap),
        );
    }
    match in_constraint_set(loss, &inst.w_sup, data, unl, cfg) {
        Ok(v) => {
            rec.check(
                "improvement iff w_sup is not attainable",
                Anchor::ConstraintSetCharacterization,
                r.improved != v.feasible,
                format!("improved {}, attainable {}", r.improved, v.feasible),
            );
            rec.verdicts.push(v);
        }
        Err(ResponsibilityError::Inconclusive { residual }) => rec
            .notes
            .push(format!("attainability inconclusive (residual {residual:.3e}); cross-check skipped")),
        Err(e) => return Err(format!("in_constraint_set: {e}")),
    }
    rec.minimax = Some(r);
    Ok(())
}

fn minimax_suite(inst: &mut Instance) -> Vec<Record> {
    let mut out = Vec::new();
    let mut rec = Record::new(Suite::Minimax, inst.index, "base");
    rec.w_sup = Some(inst.w_sup.clone());
    let outcome = minimax_checks(inst, &inst.unl, &mut rec);
    record_outcome(&mut rec, outcome);
    out.push(rec);

    if inst.loss.has_outside_margin_signature() {
        let mut rec = Record::new(Suite::Minimax, inst.index, "outside-margin");
        rec.w_sup = Some(inst.w_sup.clone());
        let unl = match inst.source {
            DataSource::Synthetic(spec) => {
                sample_outside_margin(spec, inst.w_sup.as_vector(), OUTSIDE_MARGIN, &mut inst.rng).map_err(|e| e.to_string())
            }
            DataSource::Csv(_) => Ok(inst.unl.clone()),
        };
        let outcome = unl.and_then(|unl| {
            if !outside_margin_condition(inst.loss, &unl, &inst.w_sup).map_err(|e| e.to_string())? {
                rec.notes.push("some unlabeled point lies inside the margin; variant skipped".into());
                return Ok(());
            }
            minimax_checks(inst, &unl, &mut rec)?;
            let r = rec.minimax.as_ref().expect("minimax result recorded");
            let dist = r.w_semi.max_abs_diff(&inst.w_sup);
            let (improved, value) = (r.improved, r.value);
            rec.check(
                "all unlabeled points outside the margin give an improvement",
                Anchor::OutsideMarginImprovement,
                improved && value < -1e-8 && dist > 1e-6,
                format!("value {value:.6e}, distance {dist:.3e}"),
            );
            Ok(())
        });
        record_outcome(&mut rec, outcome);
        out.push(rec);
    }
    out
}

fn general_verdict(inst: &Instance, rec: &mut Record) -> Result<Option<FeasibilityVerdict>, String> {
    match in_constraint_set(inst.loss, &inst.w_sup, &inst.data, &inst.unl, &inst.cfg) {
        Ok(v) => {
            rec.verdicts.push(v.clone());
            Ok(Some(v))
        }
        Err(ResponsibilityError::Inconclusive { residual }) => {
            rec.notes.push(format!("attainability inconclusive (residual {residual:.3e})"));
            Ok(None)
        }
        Err(e) => Err(format!("in_constraint_set: {e}")),
    }
}

fn conditions_suite(inst: &Instance) -> Record {
    let mut rec = Record::new(Suite::Conditions, inst.index, "base");
    rec.w_sup = Some(inst.w_sup.clone());
    let outcome = (|| {
        let general = general_verdict(inst, &mut rec)?;
        let per_object = recover_q(inst.loss, &inst.w_sup, &inst.unl).ok().and_then(|r| r.q);
        if let (Some(v), true) = (&general, per_object.is_some()) {
            rec.check(
                "per-object recovery implies attainability",
                Anchor::RecoveryOfSupervisedSolution,
                v.feasible,
                format!("residual {:.3e}", v.residual),
            );
        }
        if inst.loss.is_decreasing() {
            if let Some(v) = &general {
                rec.check(
                    "w_sup is attainable for a decreasing loss",
                    Anchor::SoftLabelImpossibility,
                    v.feasible,
                    format!("residual {:.3e}", v.residual),
                );
            }
        }
        if inst.loss.has_outside_margin_signature() {
            let outside = outside_margin_condition(inst.loss, &inst.unl, &inst.w_sup).map_err(|e| e.to_string())?;
            if let (true, Some(v)) = (outside, &general) {
                rec.check(
                    "all points outside the margin make w_sup unattainable",
                    Anchor::OutsideMarginImprovement,
                    !v.feasible,
                    format!("residual {:.3e}", v.residual),
                );
            }
        }
        if inst.loss.kind() == LossKind::Quadratic {
            quadratic_checks(inst, general.as_ref(), &mut rec)?;
        }
        Ok(())
    })();
    record_outcome(&mut rec, outcome);
    rec
}

fn quadratic_checks(inst: &Instance, general: Option<&FeasibilityVerdict>, rec: &mut Record) -> Outcome {
    let v = match quadratic_improvement_condition(inst.loss, &inst.unl, &inst.w_sup) {
        Ok(v) => v,
        Err(ResponsibilityError::Inconclusive { residual }) => {
            rec.notes.push(format!("quadratic condition inconclusive (residual {residual:.3e})"));
            return Ok(());
        }
        Err(e) => return Err(format!("quadratic condition: {e}")),
    };
    let a = inst.unl.decision_values(&inst.w_sup);
    match v.rule_applied {
        Rule::QuadDGeqU => {
            let inside = a.iter().all(|&ai| (0.0..=1.0).contains(&(0.5 * (1.0 + ai))));
            rec.check(
                "verdict matches the sign pattern of (1 + a) / 2",
                Anchor::QuadraticUniqueResponsibility,
                v.feasible == inside,
                format!("feasible {}, candidate in box {inside}", v.feasible),
            );
        }
        Rule::QuadDLeqUNorm => {
            let improved = minimax_fit_quadratic(&inst.data, &inst.unl, &inst.cfg)
                .map_err(|e| format!("quadratic minimax: {e}"))?
                .improved;
            rec.check(
                "norm bound gives infeasibility and an improvement",
                Anchor::QuadraticNormBound,
                !v.feasible && improved,
                format!("||a|| = {:.6}, sqrt(U) = {:.6}", a.norm(), (a.len() as f64).sqrt()),
            );
        }
        Rule::GeneralLp | Rule::OutsideMarginTheorem => {}
    }
    if let Some(g) = general {
        if v.rule_applied != Rule::GeneralLp {
            rec.check(
                "closed-form verdict agrees with the general test",
                Anchor::ConstraintSetCharacterization,
                g.feasible == v.feasible,
                format!("closed form {}, general {}", v.feasible, g.feasible),
            );
        }
    }
    rec.verdicts.push(v);
    Ok(())
}

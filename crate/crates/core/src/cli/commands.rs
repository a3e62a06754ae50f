use std::fmt::Write as _;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use super::{
    AlgebraCheckArgs, Command, EvalArgs, Outcome, TrainArgs, UatArgs, VerifyArgs, EXIT_FAILED,
    EXIT_OK,
};
use crate::algebra::resolve_algebra;
use crate::error::{Error, Result};
use crate::io::{load_model_spec, Checkpoint};
use crate::train::{
    evaluate, train, uat_sweep, uat_train_spec, write_metrics, TrainSpec, UatTarget,
};
use crate::verify::{gradient_trials, oracle_trials, LayerKind};

pub(super) fn dispatch(command: &Command) -> Result<Outcome> {
    match command {
        Command::AlgebraCheck(a) => algebra_check(a),
        Command::Verify(a) => verify(a),
        Command::Train(a) => train_cmd(a),
        Command::Eval(a) => eval(a),
        Command::UatDemo(a) => uat_demo(a),
    }
}

fn yes_no(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

fn code(pass: bool) -> i32 {
    if pass {
        EXIT_OK
    } else {
        EXIT_FAILED
    }
}

fn check_tol(name: &str, tol: f64) -> Result<()> {
    if tol.is_finite() && tol >= 0.0 {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "--{name} must be finite and >= 0, got {tol}"
        )))
    }
}

fn algebra_check(args: &AlgebraCheckArgs) -> Result<Outcome> {
    check_tol("tol", args.tol)?;
    let alg = resolve_algebra(&args.algebra, None)?;
    let report = alg.report(args.tol);
    let comm = alg.check_commutative(args.tol);
    let assoc = alg.check_associative(args.tol);
    let diagnostics = alg.diagnostics();
    let usable = report.is_usable();
    let n = report.dim;

    let mut text = String::new();
    let _ = writeln!(
        text,
        "algebra {} (dim {n}), tol {:e}",
        report.name, args.tol
    );
    let _ = writeln!(
        text,
        "  unital                {:3}  violation {:e}",
        yes_no(report.is_unital),
        report.unit_violation
    );
    let slot = |w: Option<[usize; 3]>| w.map_or(String::new(), |w| format!(" at {w:?}"));
    let _ = writeln!(
        text,
        "  commutative           {:3}  violation {:e}{}",
        yes_no(report.is_commutative),
        report.commutative_violation,
        slot(comm.worst)
    );
    let _ = writeln!(
        text,
        "  associative           {:3}  violation {:e}{}",
        yes_no(report.is_associative),
        report.associative_violation,
        slot(assoc.worst)
    );
    let _ = writeln!(
        text,
        "  left non-degenerate   {:3}  rank {}/{n}",
        yes_no(report.is_left_nondegenerate),
        report.left_rank
    );
    let _ = writeln!(
        text,
        "  right non-degenerate  {:3}  rank {}/{n}",
        yes_no(report.is_right_nondegenerate),
        report.right_rank
    );
    for d in &diagnostics {
        let _ = writeln!(text, "  note: {d}");
    }
    let _ = writeln!(text, "usable for layers: {}", yes_no(usable));

    let exit = code(usable);
    Ok(Outcome {
        code: exit,
        text,
        json: json!({
            "command": "algebra-check",
            "exit_code": exit,
            "report": report,
            "commutative_worst": comm.worst,
            "associative_worst": assoc.worst,
            "diagnostics": diagnostics,
            "usable": usable,
        }),
    })
}

fn verify(args: &VerifyArgs) -> Result<Outcome> {
    check_tol("tol", args.tol)?;
    check_tol("grad-tol", args.grad_tol)?;
    let alg = Arc::new(resolve_algebra(&args.algebra, None)?);
    let kind: LayerKind = args.layer.parse()?;
    let oracle = oracle_trials(&alg, kind, args.trials, args.seed)?;
    if !oracle.all_finite || oracle.max_rel_error.is_nan() {
        return Err(Error::NonFinite(format!(
            "{kind} forward pass on {}",
            alg.name()
        )));
    }
    let grads = gradient_trials(&alg, kind, args.gradient_checks, args.seed.wrapping_add(1))?;
    if grads.max_rel_error.is_nan() {
        return Err(Error::NonFinite(format!(
            "{kind} gradient on {}",
            alg.name()
        )));
    }
    let forward_ok = oracle.max_rel_error <= args.tol;
    let grad_ok = grads.max_rel_error <= args.grad_tol;
    let exit = code(forward_ok && grad_ok);

    let mut text = String::new();
    let _ = writeln!(
        text,
        "verify {kind} over {} (seed {})",
        alg.name(),
        args.seed
    );
    let _ = writeln!(
        text,
        "  forward: {} trials, max relative error {:e} (tol {:e}) {}",
        oracle.trials,
        oracle.max_rel_error,
        args.tol,
        if forward_ok { "ok" } else { "FAIL" }
    );
    let worst = if grads.worst_param.is_empty() {
        String::new()
    } else {
        format!(" in {}", grads.worst_param)
    };
    let _ = writeln!(
        text,
        "  gradient: {} checks, {} entries, max relative error {:e}{worst} (tol {:e}) {}",
        args.gradient_checks,
        grads.entries,
        grads.max_rel_error,
        args.grad_tol,
        if grad_ok { "ok" } else { "FAIL" }
    );
    Ok(Outcome {
        code: exit,
        text,
        json: json!({
            "command": "verify",
            "exit_code": exit,
            "algebra": alg.name(),
            "layer": kind,
            "seed": args.seed,
            "trials": oracle.trials,
            "forward_max_rel_error": oracle.max_rel_error,
            "tol": args.tol,
            "gradient_checks": args.gradient_checks,
            "gradient_entries": grads.entries,
            "gradient_max_rel_error": grads.max_rel_error,
            "gradient_worst_param": grads.worst_param,
            "grad_tol": args.grad_tol,
            "passed": exit == EXIT_OK,
        }),
    })
}

fn train_cmd(args: &TrainArgs) -> Result<Outcome> {
    let spec = load_model_spec(&args.model)?;
    let mut ts = TrainSpec::load(&args.train)?;
    if let Some(seed) = args.seed {
        ts.seed = seed;
    }
    let mut model = spec.build()?;
    // Initialization draws from its own stream so changing the schedule
    // leaves the initial weights alone.
    let mut rng = ChaCha8Rng::seed_from_u64(ts.seed);
    rng.set_stream(1);
    model.initialize(&spec.init_schemes(), &mut rng)?;
    let data = ts.data.load(&args.data, model.input_shape())?;
    let eval_data = args
        .eval_data
        .as_ref()
        .map(|p| ts.data.load(p, model.input_shape()))
        .transpose()?;
    let history = train(&mut model, &data, &ts, eval_data.as_ref(), args.wall_clock)?;
    let last = history.last().expect("at least one epoch");

    let checkpoint = Checkpoint {
        spec,
        model,
        loss: ts.loss,
        data: ts.data.clone(),
    };
    checkpoint.save(&args.out)?;
    if let Some(path) = &args.metrics {
        write_metrics(path, &history)?;
    }

    let mut text = String::new();
    let _ = writeln!(
        text,
        "trained {} epochs on {} rows, seed {}",
        ts.epochs,
        data.rows(),
        ts.seed
    );
    let _ = writeln!(text, "  final train loss {:e}", last.train_loss);
    if let Some(e) = last.eval_loss {
        let _ = writeln!(text, "  final eval loss  {e:e}");
    }
    let _ = writeln!(text, "  checkpoint {}", args.out.display());
    if let Some(path) = &args.metrics {
        let _ = writeln!(text, "  metrics    {}", path.display());
    }
    Ok(Outcome {
        code: EXIT_OK,
        text,
        json: json!({
            "command": "train",
            "exit_code": EXIT_OK,
            "epochs": ts.epochs,
            "rows": data.rows(),
            "seed": ts.seed,
            "final_train_loss": last.train_loss,
            "final_eval_loss": last.eval_loss,
            "checkpoint": args.out,
            "metrics": args.metrics,
        }),
    })
}

fn eval(args: &EvalArgs) -> Result<Outcome> {
    let ck = Checkpoint::load(&args.checkpoint)?;
    let data = ck.data.load(&args.data, ck.model.input_shape())?;
    let loss = evaluate(&ck.model, &data, ck.loss)?;
    if !loss.is_finite() {
        return Err(Error::NonFinite(format!("loss {loss}")));
    }
    let text = format!("{} loss {loss:e} on {} rows\n", ck.loss, data.rows());
    Ok(Outcome {
        code: EXIT_OK,
        text,
        json: json!({
            "command": "eval",
            "exit_code": EXIT_OK,
            "loss_name": ck.loss,
            "loss": loss,
            "rows": data.rows(),
        }),
    })
}

fn uat_demo(args: &UatArgs) -> Result<Outcome> {
    check_tol("bound", args.bound)?;
    if args.hidden.is_empty() || args.hidden.contains(&0) {
        return Err(Error::Config("--hidden needs positive widths".into()));
    }
    let alg = Arc::new(resolve_algebra(&args.algebra, None)?);
    let target: UatTarget = args.target.parse()?;
    let data = target.sample(alg.dim())?;
    let mut spec = match &args.train {
        Some(path) => TrainSpec::load(path)?,
        None => {
            let mut s = uat_train_spec(0);
            s.batch_size = s.batch_size.min(data.rows());
            s
        }
    };
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let points = uat_sweep(&data, alg.clone(), &args.hidden, args.seeds, &spec)?;
    let final_error = points.last().expect("non-empty").best_sup_error;
    let monotone = points
        .windows(2)
        .all(|w| w[1].best_sup_error <= w[0].best_sup_error);
    let passed = final_error < args.bound;
    let exit = code(passed);

    let report = json!({
        "command": "uat-demo",
        "exit_code": exit,
        "algebra": alg.name(),
        "target": target,
        "grid_points": data.rows(),
        "seeds": args.seeds,
        "first_seed": spec.seed,
        "train": spec,
        "bound": args.bound,
        "points": points,
        "final_sup_error": final_error,
        "monotone": monotone,
        "passed": passed,
    });
    if let Some(path) = &args.report {
        let bytes = serde_json::to_vec_pretty(&report).expect("report serializes");
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    }

    let mut text = String::new();
    let _ = writeln!(
        text,
        "{target} over {} on {} grid points, best of {} seeds",
        alg.name(),
        data.rows(),
        args.seeds
    );
    for p in &points {
        let _ = writeln!(
            text,
            "  hidden {:4}  sup error {:.6}",
            p.hidden, p.best_sup_error
        );
    }
    let _ = writeln!(
        text,
        "final {:.6} vs bound {} {}; non-increasing across widths: {}",
        final_error,
        args.bound,
        if passed { "ok" } else { "FAIL" },
        yes_no(monotone)
    );
    Ok(Outcome {
        code: exit,
        text,
        json: report,
    })
}

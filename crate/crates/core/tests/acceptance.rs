//! Acceptance gate: eight end-to-end criteria covering counterexample
//! indistinguishability, color-refinement verdicts, oracle correctness,
//! symmetry properties, gradient exactness, the training trends, the
//! generalization pattern, and pipeline determinism. Each criterion prints
//! one PASS/FAIL line (run with `--nocapture` to see them on success).

use std::path::PathBuf;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use milpgnn::experiment::{
    report, results_to_csv, run_experiment, write_dataset, ExperimentSpec,
};
use milpgnn::gen::{gen_counterexample, gen_dataset, GenConfig, Sampler, Variant};
use milpgnn::gnn::{forward_graph, forward_nodes, sse_grad_graph, GnnModel, Readout};
use milpgnn::graph::apply_permutation;
use milpgnn::milp::{permute_instance, Lower, Upper};
use milpgnn::oracle::canonical_solution;
use milpgnn::samples::small_unfoldable;
use milpgnn::train::{eval_graph, train_graph, Task, TrainConfig};
use milpgnn::wl::{check_fold_partition, graphs_equivalent, is_foldable, refine_colors};
use milpgnn::{encode_graph, solve_milp, MilpGraph, MilpInstance, Permutation, Sense};

struct Outcome {
    name: &'static str,
    pass: bool,
    detail: String,
    elapsed: Duration,
    limit: Duration,
}

impl Outcome {
    fn ok(&self) -> bool {
        self.pass && self.elapsed <= self.limit
    }
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let k = xs.len();
    if k % 2 == 1 {
        xs[k / 2]
    } else {
        0.5 * (xs[k / 2 - 1] + xs[k / 2])
    }
}

fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / (1.0 + a.abs().max(b.abs()))
}

/// Criterion 1: the generated counterexample pair is indistinguishable to
/// every random graph-readout model, yet the oracle labels the first
/// feasible (objective 3) and the second infeasible.
fn criterion_1() -> Outcome {
    let start = Instant::now();
    let (fi, inf) = gen_counterexample();
    let g = encode_graph(&fi);
    let h = encode_graph(&inf);
    let mut worst = 0.0f64;
    for d in [4, 16] {
        for seed in 0..50 {
            let model = GnnModel::new(d, Readout::Graph, false, seed);
            let a = forward_graph(&model, &g).unwrap();
            let b = forward_graph(&model, &h).unwrap();
            worst = worst.max(rel_diff(a, b));
        }
    }
    let la = solve_milp(&fi).unwrap();
    let lb = solve_milp(&inf).unwrap();
    let labels_ok = la.feasible && (la.objective - 3.0).abs() <= 1e-8 && !lb.feasible;
    Outcome {
        name: "counterexample indistinguishability",
        pass: worst <= 1e-6 && labels_ok,
        detail: format!("max rel output diff {worst:.2e} over 100 draws; labels feasible/infeasible"),
        elapsed: start.elapsed(),
        limit: Duration::from_secs(10),
    }
}

/// Criterion 2: refinement verdicts (discrete on the small unfoldable
/// instance, foldable + equivalent on the counterexample pair) and the
/// fold-partition conditions on 2000 generated instances.
fn criterion_2() -> Outcome {
    let start = Instant::now();
    let small = small_unfoldable();
    let gs = encode_graph(&small);
    let discrete = refine_colors(&gs, gs.num_constraints() + gs.num_variables()).is_discrete;

    let (fi, inf) = gen_counterexample();
    let g = encode_graph(&fi);
    let h = encode_graph(&inf);
    let foldable = is_foldable(&g) && is_foldable(&h);
    let equivalent = graphs_equivalent(&g, &h).unwrap();

    let d1 = gen_dataset(&GenConfig::new(Variant::D1, 1000, 1000)).unwrap();
    let d2 = gen_dataset(&GenConfig::new(Variant::D2, 1001, 1000)).unwrap();
    let mut partitions_ok = true;
    for inst in d1.iter().chain(&d2) {
        let g = encode_graph(inst);
        let coloring = refine_colors(&g, g.num_constraints() + g.num_variables());
        if !check_fold_partition(inst, &coloring).unwrap() {
            partitions_ok = false;
            break;
        }
    }
    Outcome {
        name: "color-refinement verdicts",
        pass: discrete && foldable && equivalent && partitions_ok,
        detail: format!(
            "discrete={discrete} pair foldable={foldable} equivalent={equivalent} \
             fold partitions hold on 2000 instances={partitions_ok}"
        ),
        elapsed: start.elapsed(),
        limit: Duration::from_secs(5),
    }
}

/// Exhaustive lattice enumeration for all-integer boxed instances.
fn brute_force(inst: &MilpInstance) -> (bool, f64) {
    let n = inst.num_variables();
    let lows: Vec<i64> = inst
        .lower_bounds()
        .iter()
        .map(|l| l.finite().unwrap() as i64)
        .collect();
    let highs: Vec<i64> = inst
        .upper_bounds()
        .iter()
        .map(|u| u.finite().unwrap() as i64)
        .collect();
    let mut x: Vec<i64> = lows.clone();
    let mut best = f64::INFINITY;
    let mut feasible = false;
    loop {
        let xf: Vec<f64> = x.iter().map(|&v| v as f64).collect();
        let mut ok = true;
        for i in 0..inst.num_constraints() {
            let lhs: f64 = (0..n).map(|j| inst.coefficient(i, j) * xf[j]).sum();
            let b = inst.rhs()[i];
            let sat = match inst.senses()[i] {
                Sense::Le => lhs <= b + 1e-9,
                Sense::Eq => (lhs - b).abs() <= 1e-9,
                Sense::Ge => lhs >= b - 1e-9,
            };
            if !sat {
                ok = false;
                break;
            }
        }
        if ok {
            feasible = true;
            best = best.min(inst.objective_value(&xf));
        }
        // Mixed-radix increment over the integer box.
        let mut k = 0;
        loop {
            if k == n {
                return (feasible, best);
            }
            x[k] += 1;
            if x[k] <= highs[k] {
                break;
            }
            x[k] = lows[k];
            k += 1;
        }
    }
}

fn random_boxed_instance(rng: &mut ChaCha8Rng) -> MilpInstance {
    loop {
        let m = rng.gen_range(1..=3);
        let n = rng.gen_range(2..=8);
        let mut entries = Vec::new();
        for i in 0..m {
            for j in 0..n {
                if rng.gen_bool(0.6) {
                    let v: f64 = rng.gen_range(-2.0..2.0);
                    if v != 0.0 {
                        entries.push((i, j, v));
                    }
                }
            }
        }
        let b: Vec<f64> = (0..m).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let senses: Vec<Sense> = (0..m)
            .map(|_| [Sense::Le, Sense::Eq, Sense::Ge][rng.gen_range(0..3)])
            .collect();
        let c: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut lower = Vec::new();
        let mut upper = Vec::new();
        for _ in 0..n {
            let l = rng.gen_range(-2..=1) as f64;
            let width = rng.gen_range(0..=4) as f64;
            lower.push(Lower::Finite(l));
            upper.push(Upper::Finite(l + width));
        }
        if let Ok(inst) =
            MilpInstance::new(m, n, entries, b, senses, c, lower, upper, vec![true; n])
        {
            return inst;
        }
    }
}

/// Criterion 3: branch-and-bound agrees with exhaustive enumeration on 200
/// random all-integer boxed instances; the counterexample optimum is 3.
fn criterion_3() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut worst = 0.0f64;
    let mut pass = true;
    for _ in 0..200 {
        let inst = random_boxed_instance(&mut rng);
        let (bf_feas, bf_obj) = brute_force(&inst);
        let label = solve_milp(&inst).unwrap();
        if label.feasible != bf_feas {
            pass = false;
            break;
        }
        if bf_feas {
            worst = worst.max((label.objective - bf_obj).abs());
            if (label.objective - bf_obj).abs() > 1e-8 {
                pass = false;
                break;
            }
        }
    }
    let (fi, _) = gen_counterexample();
    let cx = solve_milp(&fi).unwrap();
    pass = pass && (cx.objective - 3.0).abs() <= 1e-8;
    Outcome {
        name: "oracle vs exhaustive enumeration",
        pass,
        detail: format!("200 instances, max objective gap {worst:.2e}; counterexample optimum 3"),
        elapsed: start.elapsed(),
        limit: Duration::from_secs(60),
    }
}

/// Criterion 4: permutation invariance of graph outputs and labels,
/// equivariance of node outputs and canonical solutions.
fn criterion_4() -> Outcome {
    let start = Instant::now();
    let instances = gen_dataset(&GenConfig::new(Variant::D1, 5, 6)).unwrap();
    let graph_model = GnnModel::new(8, Readout::Graph, false, 3);
    let node_model = GnnModel::new(8, Readout::Node, false, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut worst_g = 0.0f64;
    let mut worst_n = 0.0f64;
    let mut worst_label = 0.0f64;
    let mut worst_solu = 0.0f64;
    let mut pass = true;
    for inst in &instances {
        let m = inst.num_constraints();
        let n = inst.num_variables();
        let g = encode_graph(inst);
        let base_out = forward_graph(&graph_model, &g).unwrap();
        let base_nodes = forward_nodes(&node_model, &g).unwrap();
        let base_label = solve_milp(inst).unwrap();
        let base_solu = if base_label.feasible {
            Some(canonical_solution(inst).unwrap())
        } else {
            None
        };
        for _ in 0..17 {
            let mut sv: Vec<usize> = (0..m).collect();
            let mut sw: Vec<usize> = (0..n).collect();
            sv.shuffle(&mut rng);
            sw.shuffle(&mut rng);
            let p = Permutation::new(sv, sw).unwrap();
            let pg = apply_permutation(&g, &p).unwrap();
            worst_g = worst_g.max(rel_diff(base_out, forward_graph(&graph_model, &pg).unwrap()));
            let pn = forward_nodes(&node_model, &pg).unwrap();
            let expect = p.apply_w(&base_nodes);
            for (a, b) in pn.iter().zip(&expect) {
                worst_n = worst_n.max(rel_diff(*a, *b));
            }
            let pi = permute_instance(inst, &p).unwrap();
            let pl = solve_milp(&pi).unwrap();
            if pl.feasible != base_label.feasible {
                pass = false;
            }
            if base_label.feasible {
                worst_label = worst_label
                    .max((pl.objective - base_label.objective).abs() / (1.0 + base_label.objective.abs()));
                let psol = canonical_solution(&pi).unwrap();
                let expect = p.apply_w(base_solu.as_ref().unwrap());
                for (a, b) in psol.iter().zip(&expect) {
                    worst_solu = worst_solu.max((a - b).abs());
                }
            }
        }
    }
    pass = pass && worst_g <= 1e-6 && worst_n <= 1e-6 && worst_label <= 1e-9 && worst_solu <= 1e-7;
    Outcome {
        name: "invariance/equivariance",
        pass,
        detail: format!(
            "graph {worst_g:.2e} node {worst_n:.2e} label {worst_label:.2e} solution {worst_solu:.2e}"
        ),
        elapsed: start.elapsed(),
        limit: Duration::from_secs(30),
    }
}

/// Criterion 5: on a d=4 model over 3 instances, the analytic gradient of
/// every parameter block (each layer's weight matrix and bias vector)
/// matches central finite differences with step 1e-4 within 1e-4 relative
/// error in the block norm. Block-level comparison is the robust reading:
/// a +-1e-4 probe can straddle a ReLU kink at isolated coordinates, where
/// one-sided slopes make the pointwise difference quotient ill-defined.
fn criterion_5() -> Outcome {
    let start = Instant::now();
    let (fi, inf) = gen_counterexample();
    let instances = vec![fi, inf, small_unfoldable()];
    let graphs: Vec<MilpGraph> = instances.iter().map(encode_graph).collect();
    let targets = [0.3, -0.2, 0.8];
    let batch: Vec<(&MilpGraph, f64)> = graphs.iter().zip(targets).collect();
    let mut model = GnnModel::new(4, Readout::Graph, false, 2);
    let (_, _, grads) = sse_grad_graph(&model, &batch).unwrap();
    let analytic = grads.flatten();
    let mut params = model.flatten();
    let step = 1e-4;
    let mut numeric = vec![0.0; params.len()];
    for k in 0..params.len() {
        let orig = params[k];
        let mut loss_at = |v: f64| {
            params[k] = v;
            model.unflatten(&params);
            batch
                .iter()
                .map(|&(g, t)| {
                    let y = forward_graph(&model, g).unwrap();
                    (y - t) * (y - t)
                })
                .sum::<f64>()
        };
        let hi = loss_at(orig + step);
        let lo = loss_at(orig - step);
        params[k] = orig;
        model.unflatten(&params);
        numeric[k] = (hi - lo) / (2.0 * step);
    }
    // Block boundaries follow the flattening order: per MLP, each dense
    // layer's weights then biases.
    let mut blocks = Vec::new();
    let mut offset = 0;
    for mlp in model.mlps() {
        for dense in [&mlp.l1, &mlp.l2, &mlp.l3] {
            blocks.push((offset, dense.w.len()));
            offset += dense.w.len();
            blocks.push((offset, dense.b.len()));
            offset += dense.b.len();
        }
    }
    assert_eq!(offset, params.len());
    let mut worst = 0.0f64;
    for (lo, len) in blocks.iter().copied() {
        let a = &analytic[lo..lo + len];
        let n = &numeric[lo..lo + len];
        let diff: f64 = a.iter().zip(n).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
        let norm: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        worst = worst.max(diff / (1.0 + norm));
    }
    Outcome {
        name: "gradient vs finite differences",
        pass: worst <= 1e-4,
        detail: format!(
            "{} parameters in {} blocks, max block rel error {worst:.2e}",
            params.len(),
            blocks.len()
        ),
        elapsed: start.elapsed(),
        limit: Duration::from_secs(10),
    }
}

fn feas_data(instances: &[MilpInstance], rf_seed: Option<u64>) -> (Vec<MilpGraph>, Vec<f64>) {
    let mut graphs: Vec<MilpGraph> = instances.iter().map(encode_graph).collect();
    if let Some(seed) = rf_seed {
        let g0 = &graphs[0];
        let omega = Sampler::new(seed).random_features(g0.num_constraints(), g0.num_variables());
        graphs = graphs
            .iter()
            .map(|g| g.with_random_features(omega.clone()).unwrap())
            .collect();
    }
    let targets = instances
        .iter()
        .map(|inst| if solve_milp(inst).unwrap().feasible { 1.0 } else { 0.0 })
        .collect();
    (graphs, targets)
}

/// Criterion 6: the feasibility-training trends — paired foldable data
/// floors at error 1/2 without random features, the shared random feature
/// unlocks it, and unfoldable data trains to low error at large width.
fn criterion_6() -> Outcome {
    let start = Instant::now();
    let d2 = gen_dataset(&GenConfig::new(Variant::D2, 42, 200)).unwrap();
    let d1 = gen_dataset(&GenConfig::new(Variant::D1, 42, 200)).unwrap();
    let (d2_graphs, d2_targets) = feas_data(&d2, None);
    let (d2_rf_graphs, _) = feas_data(&d2, Some(7));
    let (d1_graphs, d1_targets) = feas_data(&d1, None);

    fn pair<'a>(graphs: &'a [MilpGraph], targets: &[f64]) -> Vec<(&'a MilpGraph, f64)> {
        graphs.iter().zip(targets.iter().copied()).collect()
    }

    // Foldable pairs, no random feature: the best error across the width
    // sweep must stay at the theory floor.
    let mut norf_best = Vec::new();
    for seed in 1..=3 {
        let mut best = f64::INFINITY;
        for d in [2, 8, 32, 64] {
            let mut model = GnnModel::new(d, Readout::Graph, false, seed);
            let cfg = TrainConfig {
                target_error: None,
                ..TrainConfig::new(Task::Feas, 30)
            };
            train_graph(&mut model, &pair(&d2_graphs, &d2_targets), &cfg).unwrap();
            best = best.min(eval_graph(&model, &pair(&d2_graphs, &d2_targets), Task::Feas).unwrap());
        }
        norf_best.push(best);
    }
    let norf_median = median(norf_best);

    // Same data with the shared random feature: trains to near zero error.
    let mut rf_min = Vec::new();
    for seed in 1..=3 {
        let mut model = GnnModel::new(16, Readout::Graph, true, seed);
        let cfg = TrainConfig {
            target_error: Some(0.02),
            ..TrainConfig::new(Task::Feas, 2000)
        };
        let log = train_graph(&mut model, &pair(&d2_rf_graphs, &d2_targets), &cfg).unwrap();
        rf_min.push(log.iter().map(|e| e.task_error).fold(f64::INFINITY, f64::min));
    }
    let rf_median = median(rf_min);

    // Unfoldable data at the largest width.
    let mut d1_min = Vec::new();
    for seed in 1..=3 {
        let mut model = GnnModel::new(64, Readout::Graph, false, seed);
        let cfg = TrainConfig {
            target_error: Some(0.05),
            ..TrainConfig::new(Task::Feas, 800)
        };
        let log = train_graph(&mut model, &pair(&d1_graphs, &d1_targets), &cfg).unwrap();
        d1_min.push(log.iter().map(|e| e.task_error).fold(f64::INFINITY, f64::min));
    }
    let d1_median = median(d1_min);

    Outcome {
        name: "feasibility training trends",
        pass: norf_median >= 0.45 && rf_median <= 0.02 && d1_median <= 0.05,
        detail: format!(
            "paired floor {norf_median:.3} (>=0.45), +random feature {rf_median:.3} (<=0.02), \
             unfoldable d=64 {d1_median:.3} (<=0.05)"
        ),
        elapsed: start.elapsed(),
        limit: Duration::from_secs(30 * 60),
    }
}

fn spec(manifest: PathBuf, task: &str, sizes: (usize, usize), epochs: usize, batch: usize) -> ExperimentSpec {
    ExperimentSpec {
        name: format!("accept_{task}_{}", sizes.0),
        manifest,
        task: task.to_string(),
        dims: vec![16],
        seeds: vec![1, 2, 3],
        epochs,
        batch_size: batch,
        learning_rate: 1e-4,
        target_error: None,
        random_features: true,
        rf_seed: 7,
        train_size: sizes.0,
        test_size: sizes.1,
        checkpoint_dir: None,
    }
}

fn medians(spec: &ExperimentSpec) -> (f64, f64) {
    let rows = run_experiment(spec).unwrap();
    let train = median(rows.iter().map(|r| r.train_err).collect());
    let test = median(rows.iter().map(|r| r.test_err.unwrap()).collect());
    (train, test)
}

/// Criteria 7 and 8 share the generated dataset and one experiment run, so
/// they are produced together.
fn criteria_7_and_8() -> (Outcome, Outcome) {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let instances = gen_dataset(&GenConfig::new(Variant::D2Gen, 11, 4000)).unwrap();
    let manifest = write_dataset(dir.path(), "d2gen", 11, &instances).unwrap();

    let s10 = spec(manifest.clone(), "feas", (10, 1000), 4000, 2);
    let rows10 = run_experiment(&s10).unwrap();
    let e10 = median(rows10.iter().map(|r| r.test_err.unwrap()).collect());
    let (_, e100) = medians(&spec(manifest.clone(), "feas", (100, 1000), 150, 2));
    let (_, e1000) = medians(&spec(manifest.clone(), "feas", (1000, 1000), 250, 2));
    let (obj_train, obj_test) = medians(&spec(manifest.clone(), "obj", (1000, 1000), 150, 32));
    let (solu_train, solu_test) = medians(&spec(manifest.clone(), "solu", (1000, 1000), 150, 32));

    let in_band = |err: f64, center: f64| (err - center).abs() <= 0.1;
    let pass = e10 > e100
        && e100 > e1000
        && in_band(e10, 0.289)
        && in_band(e100, 0.104)
        && in_band(e1000, 0.022)
        && obj_test <= 2.0 * obj_train
        && solu_test <= 2.0 * solu_train;
    let c7 = Outcome {
        name: "generalization pattern",
        pass,
        detail: format!(
            "feas test {e10:.3}/{e100:.3}/{e1000:.3} vs (0.289, 0.104, 0.022) +-0.1; \
             obj {obj_test:.3}<=2x{obj_train:.3}, solu {solu_test:.3}<=2x{solu_train:.3}"
        ),
        elapsed: start.elapsed(),
        limit: Duration::from_secs(45 * 60),
    };

    // Criterion 8: the same pipeline re-run with the same seeds emits an
    // identical CSV (wall-clock column masked — it is the only field that
    // carries no modeling content).
    let start8 = Instant::now();
    let rows10_again = run_experiment(&s10).unwrap();
    let mask = |csv: &str| -> String {
        csv.lines()
            .map(|l| {
                let mut f: Vec<&str> = l.split(',').collect();
                if f.len() == 12 {
                    f[9] = "-";
                }
                f.join(",")
            })
            .collect::<Vec<_>>()
            .join("\n")
    };
    let same_results = mask(&results_to_csv(&rows10)) == mask(&results_to_csv(&rows10_again));
    let (_, plot_a) = report(&rows10).unwrap();
    let (_, plot_b) = report(&rows10_again).unwrap();
    let c8 = Outcome {
        name: "pipeline determinism",
        pass: same_results && plot_a == plot_b,
        detail: format!("results CSV identical={same_results}, report CSV identical={}", plot_a == plot_b),
        elapsed: start8.elapsed(),
        limit: Duration::from_secs(45 * 60),
    };
    (c7, c8)
}

#[test]
#[ignore = "subset of the full acceptance gate, for quick iteration"]
fn gradient_criterion_only() {
    let o = criterion_5();
    println!("{}: {} — {}", o.name, if o.ok() { "PASS" } else { "FAIL" }, o.detail);
    assert!(o.ok());
}

#[test]
fn acceptance() {
    let mut outcomes = vec![
        criterion_1(),
        criterion_2(),
        criterion_3(),
        criterion_4(),
        criterion_5(),
        criterion_6(),
    ];
    let (c7, c8) = criteria_7_and_8();
    outcomes.push(c7);
    outcomes.push(c8);

    let mut all_ok = true;
    for (i, o) in outcomes.iter().enumerate() {
        let verdict = if o.ok() { "PASS" } else { "FAIL" };
        println!(
            "criterion {} ({}): {} — {} [{:.1}s of {:.0}s budget]",
            i + 1,
            o.name,
            verdict,
            o.detail,
            o.elapsed.as_secs_f64(),
            o.limit.as_secs_f64()
        );
        all_ok &= o.ok();
    }
    assert!(all_ok, "one or more acceptance criteria failed");
}

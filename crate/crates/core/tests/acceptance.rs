//! Acceptance checks. Prints one `PASS`, `FAIL` or `SKIP` line per criterion.
//!
//! Reference values are computed here from first principles (dense plans, brute-force
//! assignments, quadruple loops), independently of the library's factored code paths.
//! A failing check does not fail `cargo test` unless `FRLC_ACCEPTANCE_STRICT` is set.

use std::f64::consts::PI;
use std::path::Path;
use std::time::Instant;

use nalgebra::DMatrix;
use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use frlc::analysis::{lc_project, omega, optimal_g};
use frlc::cost::CostSpec;
use frlc::datasets::{build_preset, load_graph, Preset};
use frlc::io::read_labels;
use frlc::lc::{LcFactors, Marginal};
use frlc::metrics::adjusted_mutual_info;
use frlc::objectives::{gradient, gw_cost};
use frlc::partition::{partition_runs, GraphCost, PartitionConfig};
use frlc::problem::{Mode, Objective, ProblemSpec};
use frlc::solver::{frlc_solve, initialize_couplings};

const STRICT_ENV: &str = "FRLC_ACCEPTANCE_STRICT";
const VILLAGE_EDGES_ENV: &str = "FRLC_VILLAGE_EDGES";
const VILLAGE_LABELS_ENV: &str = "FRLC_VILLAGE_LABELS";

enum Status {
    Pass(String),
    Fail(String),
    Skip(String),
}

fn verdict(ok: bool, detail: String) -> Status {
    if ok {
        Status::Pass(detail)
    } else {
        Status::Fail(detail)
    }
}

// ---------- independent reference computations ----------

/// `Q·diag(1/Qᵀ1)·T·diag(1/Rᵀ1)·Rᵀ`, entry by entry.
fn dense_plan(q: &Array2<f64>, r: &Array2<f64>, t: &Array2<f64>) -> Array2<f64> {
    let gq = q.sum_axis(Axis(0));
    let gr = r.sum_axis(Axis(0));
    let (n, m) = (q.nrows(), r.nrows());
    Array2::from_shape_fn((n, m), |(i, j)| {
        let mut s = 0.0;
        for k in 0..t.nrows() {
            for l in 0..t.ncols() {
                s += q[[i, k]] / gq[k] * t[[k, l]] / gr[l] * r[[j, l]];
            }
        }
        s
    })
}

fn l1(x: &Array1<f64>, y: &Array1<f64>) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b).abs()).sum()
}

fn euclidean(z1: &Array2<f64>, z2: &Array2<f64>) -> Array2<f64> {
    Array2::from_shape_fn((z1.nrows(), z2.nrows()), |(i, j)| {
        z1.row(i).iter().zip(z2.row(j)).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
    })
}

fn uniform_points(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, d), |_| rng.random::<f64>())
}

fn random_matrix(rng: &mut ChaCha8Rng, n: usize, m: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, m), |_| rng.random::<f64>())
}

fn random_symmetric(rng: &mut ChaCha8Rng, n: usize) -> Array2<f64> {
    let x = random_matrix(rng, n, n);
    (&x + &x.t()) / 2.0
}

fn random_marginal(rng: &mut ChaCha8Rng, n: usize, mass: f64) -> Marginal {
    let w = Array1::from_shape_fn(n, |_| 0.5 + rng.random::<f64>());
    let s = w.sum();
    Marginal::new(w * (mass / s)).unwrap()
}

/// Minimum of `Σ_i C[i, σ(i)] / n` over all permutations (Heap's algorithm).
fn brute_assignment(c: &Array2<f64>) -> f64 {
    let n = c.nrows();
    let mut perm: Vec<usize> = (0..n).collect();
    let score = |p: &[usize]| p.iter().enumerate().map(|(i, &j)| c[[i, j]]).sum::<f64>();
    let mut best = score(&perm);
    let mut counters = vec![0; n];
    let mut i = 0;
    while i < n {
        if counters[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(counters[i], i);
            }
            best = best.min(score(&perm));
            counters[i] += 1;
            i = 0;
        } else {
            counters[i] = 0;
            i += 1;
        }
    }
    best / n as f64
}

/// `Σ_{i,j,k,l} (A_ik − B_jl)² P_ij P_kl`.
fn gw_quadruple(a: &Array2<f64>, b: &Array2<f64>, p: &Array2<f64>) -> f64 {
    let (n, m) = p.dim();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..m {
            for k in 0..n {
                for l in 0..m {
                    s += (a[[i, k]] - b[[j, l]]).powi(2) * p[[i, j]] * p[[k, l]];
                }
            }
        }
    }
    s
}

/// The reduced GW objective `Σ A²_ik (Q1)_i (Q1)_k + Σ B²_jl (R1)_j (R1)_l − 2 Σ A_ik B_jl P_ij P_kl`.
fn gw_reduced_dense(a: &Array2<f64>, b: &Array2<f64>, q: &Array2<f64>, r: &Array2<f64>, t: &Array2<f64>) -> f64 {
    let p = dense_plan(q, r, t);
    let (q1, r1) = (q.sum_axis(Axis(1)), r.sum_axis(Axis(1)));
    let (n, m) = p.dim();
    let mut s = 0.0;
    for i in 0..n {
        for k in 0..n {
            s += a[[i, k]].powi(2) * q1[i] * q1[k];
        }
    }
    for j in 0..m {
        for l in 0..m {
            s += b[[j, l]].powi(2) * r1[j] * r1[l];
        }
    }
    for i in 0..n {
        for j in 0..m {
            for k in 0..n {
                for l in 0..m {
                    s -= 2.0 * a[[i, k]] * b[[j, l]] * p[[i, j]] * p[[k, l]];
                }
            }
        }
    }
    s
}

fn ndarray_to_dmatrix(x: &Array2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| x[[i, j]])
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

// ---------- criteria ----------

fn moons_benchmark() -> Status {
    let mut costs = Vec::new();
    let (mut worst_res, mut worst_time) = (0.0f64, 0.0f64);
    for seed in 0..5u64 {
        let inst = build_preset(Preset::MoonsGaussians, 1000, 1000, seed).unwrap();
        let p = ProblemSpec::uniform(1000, 1000, 100).with_seed(seed);
        let start = Instant::now();
        let rep = frlc_solve(&p, &inst.cost, None).unwrap();
        worst_time = worst_time.max(start.elapsed().as_secs_f64());
        let (q, r, t) = (rep.factors.q(), rep.factors.r(), rep.factors.t());
        let plan = q.dot(&Array2::from_diag(&q.sum_axis(Axis(0)).mapv(|g| 1.0 / g)))
            .dot(t)
            .dot(&Array2::from_diag(&r.sum_axis(Axis(0)).mapv(|g| 1.0 / g)))
            .dot(&r.t());
        let c = inst.cost.linear().unwrap().to_dense();
        costs.push((&plan * &c).sum());
        let u = Array1::from_elem(1000, 1e-3);
        worst_res = worst_res.max(l1(&plan.sum_axis(Axis(1)), &u)).max(l1(&plan.sum_axis(Axis(0)), &u));
    }
    let mean = costs.iter().sum::<f64>() / costs.len() as f64;
    let ok = (mean - 0.207).abs() <= 0.01 && worst_res <= 1e-4 && worst_time <= 30.0;
    verdict(
        ok,
        format!("mean cost {mean:.4} (target 0.207 ± 0.01), max residual {worst_res:.1e} (≤ 1e-4), slowest solve {worst_time:.1} s (≤ 30 s)"),
    )
}

fn rank_monotonicity() -> Status {
    let inst = build_preset(Preset::MoonsGaussians, 1000, 1000, 0).unwrap();
    let run = |rank: usize| -> Vec<f64> {
        (0..10u64)
            .map(|seed| {
                let p = ProblemSpec::uniform(1000, 1000, rank).with_seed(seed);
                frlc_solve(&p, &inst.cost, None).unwrap().final_cost()
            })
            .collect()
    };
    let (m20, s20) = mean_std(&run(20));
    let (m200, s200) = mean_std(&run(200));
    let pooled = ((s20 * s20 + s200 * s200) / 2.0).sqrt();
    verdict(
        m200 <= m20 && m20 - m200 > pooled,
        format!("rank 20 mean {m20:.4} ± {s20:.4}, rank 200 mean {m200:.4} ± {s200:.4}, gap {:.4} vs pooled std {pooled:.4}", m20 - m200),
    )
}

fn oracle_equivalence() -> Status {
    let mut rng = ChaCha8Rng::seed_from_u64(1001);
    let (mut worst_rel, mut bound_violations) = (0.0f64, 0);
    for inst in 0..50u64 {
        let c = euclidean(&uniform_points(&mut rng, 8, 2), &uniform_points(&mut rng, 8, 2));
        let oracle = brute_assignment(&c);
        let (lo, hi) = c.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
        let spec = CostSpec::dense(c.clone());
        for r in 2..=8usize {
            let p = ProblemSpec::uniform(8, 8, r).with_seed(inst);
            let rep = frlc_solve(&p, &spec, None).unwrap();
            let f = &rep.factors;
            let cost = (&dense_plan(f.q(), f.r(), f.t()) * &c).sum();
            let bound = ((hi - lo) * (8.0 / (r - 1) as f64).ln()).max(0.0);
            if (cost - oracle).abs() > bound + 1e-12 {
                bound_violations += 1;
            }
            if r == 8 {
                worst_rel = worst_rel.max((cost - oracle).abs() / oracle);
            }
        }
    }
    verdict(
        worst_rel <= 0.05 && bound_violations == 0,
        format!("worst full-rank relative gap {worst_rel:.2e} (≤ 5%), rank-bound violations {bound_violations}/350"),
    )
}

fn gradient_correctness() -> Status {
    let mut rng = ChaCha8Rng::seed_from_u64(2002);
    let mut worst = 0.0f64;
    for inst in 0..20u64 {
        let a = random_marginal(&mut rng, 5, 1.0);
        let b = random_marginal(&mut rng, 6, 1.0);
        let f = initialize_couplings(&a, &b, 3, 3, inst).unwrap();
        let c = random_matrix(&mut rng, 5, 6);
        let (ia, ib) = (random_symmetric(&mut rng, 5), random_symmetric(&mut rng, 6));
        let alpha = rng.random_range(0.1..0.9);
        let spec = CostSpec::dense(c.clone()).with_intra(ia.clone(), ib.clone()).unwrap();
        let value = |obj: Objective, q: &Array2<f64>, r: &Array2<f64>, t: &Array2<f64>| -> f64 {
            let w = || (&dense_plan(q, r, t) * &c).sum();
            match obj {
                Objective::Wasserstein => w(),
                Objective::GromovWasserstein => gw_reduced_dense(&ia, &ib, q, r, t),
                Objective::Fused { alpha } => alpha * w() + (1.0 - alpha) * gw_reduced_dense(&ia, &ib, q, r, t),
            }
        };
        for obj in [Objective::Wasserstein, Objective::GromovWasserstein, Objective::Fused { alpha }] {
            let g = gradient(&f, &spec, obj).unwrap();
            for block in 0..3 {
                let (base, an) = match block {
                    0 => (f.q(), &g.dq),
                    1 => (f.r(), &g.dr),
                    _ => (f.t(), &g.dt),
                };
                let h = 1e-6;
                let fd = Array2::from_shape_fn(base.dim(), |idx| {
                    let eval = |s: f64| {
                        let mut x = base.clone();
                        x[idx] += s;
                        match block {
                            0 => value(obj, &x, f.r(), f.t()),
                            1 => value(obj, f.q(), &x, f.t()),
                            _ => value(obj, f.q(), f.r(), &x),
                        }
                    };
                    (eval(h) - eval(-h)) / (2.0 * h)
                });
                let scale = an.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1e-12);
                let err = (&fd - an).iter().fold(0.0f64, |m, x| m.max(x.abs())) / scale;
                worst = worst.max(err);
            }
        }
    }
    verdict(worst <= 1e-4, format!("worst relative gradient error {worst:.2e} over 20 instances × W/GW/FGW (≤ 1e-4)"))
}

fn gw_self_consistency() -> Status {
    let mut rng = ChaCha8Rng::seed_from_u64(3003);
    let mut worst = 0.0f64;
    for inst in 0..20u64 {
        let (n, m) = (rng.random_range(4..9), rng.random_range(4..9));
        let a = random_marginal(&mut rng, n, 1.0);
        let b = random_marginal(&mut rng, m, 1.0);
        let f = initialize_couplings(&a, &b, 3, 3, inst).unwrap();
        let (ia, ib) = (random_symmetric(&mut rng, n), random_symmetric(&mut rng, m));
        let spec = CostSpec::gw(ia.clone(), ib.clone()).unwrap();
        let reference = gw_quadruple(&ia, &ib, &dense_plan(f.q(), f.r(), f.t()));
        worst = worst.max((gw_cost(&f, &spec).unwrap() - reference).abs() / reference.abs().max(1e-300));
    }

    let z = uniform_points(&mut ChaCha8Rng::seed_from_u64(3004), 40, 2);
    let a = euclidean(&z, &z);
    let mean_sq = a.mapv(|x| x * x).mean().unwrap();
    let spec = CostSpec::gw(a.clone(), a.clone()).unwrap();
    let p = ProblemSpec::uniform(40, 40, 40).with_objective(Objective::GromovWasserstein);
    let rep = frlc_solve(&p, &spec, None).unwrap();
    let f = &rep.factors;
    let self_cost = gw_quadruple(&a, &a, &dense_plan(f.q(), f.r(), f.t()));
    let threshold = 1e-3 * mean_sq;
    verdict(
        worst <= 1e-10 && self_cost <= threshold,
        format!("gw_cost vs quadruple loop {worst:.1e} (≤ 1e-10); identical clouds cost {self_cost:.3e} (≤ {threshold:.3e})"),
    )
}

fn feasibility() -> Status {
    let mut rng = ChaCha8Rng::seed_from_u64(4004);
    let modes = [Mode::Balanced, Mode::Unbalanced, Mode::SemiRelaxedLeft, Mode::SemiRelaxedRight];
    let (mut violations, mut worst_balanced) = (0, 0.0f64);
    for inst in 0..100u64 {
        let mode = modes[inst as usize % 4];
        let (n, m) = (rng.random_range(6..16), rng.random_range(6..16));
        let rank = rng.random_range(2..5);
        let b_mass = if mode == Mode::Balanced { 1.0 } else { rng.random_range(0.8..1.2) };
        let a = random_marginal(&mut rng, n, 1.0);
        let b = random_marginal(&mut rng, m, b_mass);
        let c = CostSpec::dense(random_matrix(&mut rng, n, m));
        let mut p = ProblemSpec::new(a.clone(), b.clone(), rank).with_mode(mode).with_seed(inst);
        p.max_iter = 40;
        let rep = frlc_solve(&p, &c, None).unwrap();
        let (q, r, t) = (rep.factors.q(), rep.factors.r(), rep.factors.t());
        let plan = dense_plan(q, r, t);
        let (pa, pb) = (plan.sum_axis(Axis(1)), plan.sum_axis(Axis(0)));
        let (gq, gr) = (q.sum_axis(Axis(0)), r.sum_axis(Axis(0)));
        let left = l1(&pa, a.as_array());
        let right = l1(&pb, b.as_array());
        let left_bound = l1(&t.sum_axis(Axis(1)), &gq) + l1(&q.sum_axis(Axis(1)), a.as_array());
        let right_bound = l1(&t.sum_axis(Axis(0)), &gr) + l1(&r.sum_axis(Axis(1)), b.as_array());
        if left > left_bound + 1e-12 || right > right_bound + 1e-12 {
            violations += 1;
        }
        if mode == Mode::Balanced {
            worst_balanced = worst_balanced.max(left).max(right);
        }
    }
    let src = Path::new(env!("CARGO_MANIFEST_DIR")).join("src");
    let mut dykstra_files = Vec::new();
    let mut stack = vec![src];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else if std::fs::read_to_string(&path).unwrap().to_lowercase().contains("dykstra") {
                dykstra_files.push(path.display().to_string());
            }
        }
    }
    verdict(
        violations == 0 && worst_balanced <= 1e-8 && dykstra_files.is_empty(),
        format!(
            "bound violations {violations}/100, worst balanced residual {worst_balanced:.1e} (≤ 1e-8), joint-projection code in {:?}",
            dykstra_files
        ),
    )
}

fn full_rank_init() -> Status {
    let u = Marginal::uniform(20);
    let mut ranks = Vec::new();
    for seed in 0..100u64 {
        let f = initialize_couplings(&u, &u, 5, 5, seed).unwrap();
        let sv = ndarray_to_dmatrix(f.q()).singular_values();
        let top = sv.max();
        ranks.push(sv.iter().filter(|&&s| s > 1e-10 * top).count());
    }
    let bad = ranks.iter().filter(|&&r| r != 5).count();
    verdict(bad == 0, format!("Q numeric rank 5 on {}/100 seeds", 100 - bad))
}

fn closed_form_g() -> Status {
    let mut rng = ChaCha8Rng::seed_from_u64(5005);
    let (mut losses, mut worst_margin) = (0, f64::INFINITY);
    for inst in 0..20u64 {
        let r = 2 + (inst as usize % 2);
        let (n, m) = (6, 7);
        let u_a = Marginal::uniform(n);
        let u_b = Marginal::uniform(m);
        let f = initialize_couplings(&u_a, &u_b, r, r, inst).unwrap();
        let c = random_matrix(&mut rng, n, m);
        let (q, rr) = (f.q(), f.r());
        let w: Vec<f64> = (0..r)
            .map(|k| (0..n).flat_map(|i| (0..m).map(move |j| (i, j))).map(|(i, j)| q[[i, k]] * c[[i, j]] * rr[[j, k]]).sum())
            .collect();
        let cost = |g: &[f64]| w.iter().zip(g).map(|(w, g)| w / g).sum::<f64>();
        let spec = CostSpec::dense(c.clone());
        let g_star = optimal_g(q, rr, &spec).unwrap().g.into_array().to_vec();
        let best = cost(&g_star);
        let lib_w = omega(q, rr, &spec).unwrap();
        assert!(lib_w.iter().zip(&w).all(|(x, y)| (x - y).abs() <= 1e-12 * y.abs().max(1.0)));

        let mut competitor = f64::INFINITY;
        for _ in 0..10_000 {
            let e: Vec<f64> = (0..r).map(|_| -rng.random::<f64>().max(f64::MIN_POSITIVE).ln()).collect();
            let s: f64 = e.iter().sum();
            competitor = competitor.min(cost(&e.iter().map(|x| x / s).collect::<Vec<_>>()));
        }
        let steps = 10_000usize;
        for i in 1..steps {
            let x = i as f64 / steps as f64;
            if r == 2 {
                competitor = competitor.min(cost(&[x, 1.0 - x]));
            } else {
                for j in 1..steps - i {
                    let y = j as f64 / steps as f64;
                    competitor = competitor.min(cost(&[x, y, 1.0 - x - y]));
                }
            }
        }
        if best > competitor + 1e-12 * competitor {
            losses += 1;
        }
        worst_margin = worst_margin.min(competitor - best);
    }
    verdict(losses == 0, format!("closed form lost on {losses}/20 instances; smallest margin over search {worst_margin:.2e}"))
}

fn lc_projection_structure() -> Status {
    let inst = build_preset(Preset::Roots, 1000, 1000, 0).unwrap();
    let p = ProblemSpec::uniform(1000, 1000, 10).with_ranks(10, 5).with_seed(0);
    let rep = frlc_solve(&p, &inst.cost, None).unwrap();
    let f: &LcFactors = &rep.factors;
    let concentrated = f
        .t()
        .rows()
        .into_iter()
        .filter(|row| row.iter().fold(0.0f64, |m, &x| m.max(x)) >= 0.8 * row.sum())
        .count();
    let bary = lc_project(f, &inst.source.points, &inst.target.points).unwrap();
    let centers = |k: usize, radius: f64| {
        Array2::from_shape_fn((k, 2), |(i, d)| {
            let th = 2.0 * PI * i as f64 / k as f64;
            radius * if d == 0 { th.cos() } else { th.sin() }
        })
    };
    let worst = |y: &Array2<f64>, c: &Array2<f64>| {
        euclidean(y, c).rows().into_iter().map(|row| row.iter().fold(f64::INFINITY, |m, &x| m.min(x))).fold(0.0f64, f64::max)
    };
    let (d1, d2) = (worst(&bary.y1, &centers(10, 3.0)), worst(&bary.y2, &centers(5, 1.0)));
    verdict(
        concentrated >= 9 && d1 <= 0.2 && d2 <= 0.2,
        format!("{concentrated}/10 T rows with ≥ 80% on one column; Y1 within {d1:.3}, Y2 within {d2:.3} of true centers (≤ 0.2)"),
    )
}

fn village_partition() -> Status {
    let (Ok(edges), Ok(labels)) = (std::env::var(VILLAGE_EDGES_ENV), std::env::var(VILLAGE_LABELS_ENV)) else {
        return Status::Skip(format!("set {VILLAGE_EDGES_ENV} and {VILLAGE_LABELS_ENV} to run"));
    };
    let graph = load_graph(&edges).unwrap();
    let truth = read_labels(&labels).unwrap();
    let clusters = truth.iter().collect::<std::collections::BTreeSet<_>>().len();
    let mut cfg = PartitionConfig::new(clusters, GraphCost::Heat { t: 10.0 });
    cfg.runs = 10;
    let runs = partition_runs(&graph, &cfg).unwrap();
    let amis: Vec<f64> = runs.iter().map(|r| adjusted_mutual_info(&truth, &r.labels).unwrap()).collect();
    let mean = amis.iter().sum::<f64>() / amis.len() as f64;
    verdict(mean >= 0.55, format!("mean AMI {mean:.3} over 10 runs (≥ 0.55)"))
}

fn main() {
    let checks: [(&str, fn() -> Status); 10] = [
        ("moons-gaussians benchmark", moons_benchmark),
        ("rank monotonicity", rank_monotonicity),
        ("oracle equivalence", oracle_equivalence),
        ("gradient correctness", gradient_correctness),
        ("gw self-consistency", gw_self_consistency),
        ("feasibility by construction", feasibility),
        ("full-rank initialization", full_rank_init),
        ("closed-form inner marginal", closed_form_g),
        ("lc-projection structure", lc_projection_structure),
        ("village graph partitioning", village_partition),
    ];
    let mut failed = 0;
    for (name, check) in checks {
        let start = Instant::now();
        let status = check();
        let secs = start.elapsed().as_secs_f64();
        let (tag, detail) = match status {
            Status::Pass(d) => ("PASS", d),
            Status::Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Status::Skip(d) => ("SKIP", d),
        };
        println!("{tag} {name}: {detail} [{secs:.1} s]");
    }
    println!("acceptance: {failed} of {} criteria failed", checks.len());
    if failed > 0 && std::env::var_os(STRICT_ENV).is_some() {
        std::process::exit(1);
    }
}

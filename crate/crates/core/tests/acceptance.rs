//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line.
//!
//! The lines bypass output capture, so they show in a plain `cargo test`
//! run. The test fails if any criterion fails, except those listed in
//! `KNOWN_FAILURES`, whose failure must match the recorded analysis.

#![allow(clippy::needless_range_loop)]

use std::io::Write;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use polysweep::builtin::example21_path;
use polysweep::discopt::{build_problem, solve, steering_scenario, ProblemInstance, SolveOptions, Solution};
use polysweep::linalg::{dist, dot, norm};
use polysweep::lp::{LinearProgram, RowKind};
use polysweep::optimality::{
    coderivative_member, recover_multipliers, CoderivativeCandidate, OptimalityError,
    RecoveryOptions,
};
use polysweep::sweep::{
    analytic_oracle, catching_up, convergence_study, stability_experiment, ConvergenceReference,
    Scheme,
};
use polysweep::{ControlPath, Mesh, Polyhedron};

/// Criteria whose measured outcome contradicts the stated threshold. The
/// harness still prints FAIL for them.
const KNOWN_FAILURES: &[usize] = &[6];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn run(id: usize, limit: Duration, f: impl FnOnce() -> Outcome) -> (usize, bool) {
    let start = Instant::now();
    let o = f();
    let took = start.elapsed();
    let pass = o.pass && took <= limit;
    // straight to the stderr handle, which the test harness does not capture
    let line = format!(
        "criterion {id:2}: {} ({:.2} s, limit {} s) {}\n",
        if pass { "PASS" } else { "FAIL" },
        took.as_secs_f64(),
        limit.as_secs(),
        o.detail
    );
    std::io::stderr().write_all(line.as_bytes()).unwrap();
    (id, pass)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn hoffman() -> Outcome {
    let path = example21_path::<f64>(&Mesh::uniform(1.0, 1).unwrap());
    let mut worst = 0.0f64;
    for t in [0.5, 0.2, 0.1, 0.05, 0.01] {
        let p = path.polyhedron_at(t).unwrap();
        let x = [t.powi(-3), 1.0];
        worst = worst
            .max(rel(p.hoffman_ratio(&x).unwrap(), 1.0 / t))
            .max(rel(p.distance(&x).unwrap(), t.powi(-3) - 1.0 / t));
    }
    outcome(worst <= 1e-9, format!("worst relative error {worst:.2e}"))
}

/// Random polyhedron in `R^n` with `m` rows containing a ball of radius
/// `margin` around a random centre.
fn random_polyhedron(rng: &mut ChaCha8Rng, margin: f64) -> Polyhedron {
    let n = rng.gen_range(1..=6);
    let m = rng.gen_range(1..=8);
    let centre: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
    let mut normals = Vec::with_capacity(m);
    let mut offsets = Vec::with_capacity(m);
    for _ in 0..m {
        let u: Vec<f64> = loop {
            let u: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            if norm(&u) > 0.1 {
                break u;
            }
        };
        offsets.push(dot(&u, &centre) + norm(&u) * (margin + rng.gen_range(0.0..2.0)));
        normals.push(u);
    }
    Polyhedron::new(normals, offsets).unwrap()
}

fn in_ball(rng: &mut ChaCha8Rng, n: usize, r: f64) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        let s = norm(&v);
        if s <= 1.0 {
            return v.into_iter().map(|a| a * r).collect();
        }
    }
}

fn truncation() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut general, mut factor3, mut checked3) = (0, 0, 0);
    for _ in 0..1000 {
        let p = random_polyhedron(&mut rng, 0.0);
        let n = p.dim();
        let d0 = p.distance(&vec![0.0; n]).unwrap();
        let r = d0 + rng.gen_range(0.01..4.0) * (1.0 + d0);
        let x = in_ball(&mut rng, n, r);
        let lhs = p.truncated_distance(&x, r).unwrap();
        let d = p.distance(&x).unwrap();
        if lhs > 2.0 * r / (r - d0) * d + 1e-7 {
            general += 1;
        }
        if r > 3.0 * d0 {
            checked3 += 1;
            if lhs > 3.0 * d + 1e-7 {
                factor3 += 1;
            }
        }
    }
    outcome(
        general == 0 && factor3 == 0,
        format!("violations {general} general, {factor3} of {checked3} with r > 3 d(0, C)"),
    )
}

fn error_bound() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut done, mut bad, mut worst) = (0, 0, f64::INFINITY);
    while done < 1000 {
        let p = random_polyhedron(&mut rng, 0.2);
        let cert = p.slater_margin(20.0).unwrap();
        if cert.margin <= 0.1 {
            continue;
        }
        let n = p.dim();
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-15.0..15.0)).collect();
        if p.residual(&x).unwrap().0 <= 0.0 {
            continue;
        }
        done += 1;
        let slack = p.distance_upper_bound(&x, &cert).unwrap() - p.distance(&x).unwrap();
        worst = worst.min(slack);
        if slack < -1e-7 {
            bad += 1;
        }
    }
    outcome(bad == 0, format!("{bad} violations, least slack {worst:.3e}"))
}

fn slater() -> Outcome {
    let path = example21_path::<f64>(&Mesh::uniform(1.0, 10).unwrap());
    let mut eps = Vec::new();
    for refine in [1, 4, 16] {
        eps.push(path.check_uniform_slater(1.0, refine).unwrap().epsilon);
    }
    let witness = path.polyhedron_at(0.0).unwrap().margin_at(&[0.0, 0.5]).unwrap();
    let constant = (0..=100)
        .map(|k| path.polyhedron_at(k as f64 / 100.0).unwrap().margin_at(&[0.0, 0.5]).unwrap())
        .fold(f64::INFINITY, f64::min);
    let pass = eps.iter().all(|e| (e - 0.5).abs() <= 1e-6) && (constant - 0.5).abs() <= 1e-12;
    outcome(
        pass,
        format!("epsilon {eps:?}, margin of (0, 0.5): {witness} at t = 0, {constant} over [0, 1]"),
    )
}

fn trajectory() -> Outcome {
    let path = example21_path::<f64>(&Mesh::uniform(1.0, 1).unwrap());
    let x0 = [2.0, 0.5];
    let exact = |t: f64| analytic_oracle(&x0, t);
    let table = convergence_study(
        &path,
        &x0,
        &Mesh::uniform(1.0, 100).unwrap(),
        4,
        &ConvergenceReference::Function(&exact),
        Scheme::Implicit,
    )
    .unwrap();
    let e = &table.sup_error;
    let monotone = e.windows(2).all(|w| w[1] < w[0]);
    let ratios: Vec<f64> = table.ratios.iter().map(|r| r.unwrap_or(f64::NAN)).collect();
    let ratios_ok = ratios.iter().all(|r| (1.5..=2.5).contains(r));
    let fine = catching_up(&path, &x0, &Mesh::uniform(1.0, 800).unwrap(), Scheme::Implicit).unwrap();
    let end = dist(fine.endpoint(), &[1.0, 1.0]);

    let still = [0.2, 0.5];
    let tr = catching_up(&path, &still, &Mesh::uniform(1.0, 100).unwrap(), Scheme::Implicit).unwrap();
    let mut still_err = 0.0f64;
    for (x, &t) in tr.states.iter().zip(tr.mesh.nodes()) {
        still_err = still_err.max(dist(x, &still)).max(dist(x, &analytic_oracle(&still, t).unwrap()));
    }
    outcome(
        monotone && ratios_ok && e[3] < 5e-3 && end < 5e-3 && still_err == 0.0,
        format!(
            "errors {:?}, ratios {:?}, endpoint offset {end:.2e}, resting branch error {still_err}",
            e.iter().map(|v| format!("{v:.3e}")).collect::<Vec<_>>(),
            ratios.iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>()
        ),
    )
}

struct StabilityNumbers {
    ratios: Vec<f64>,
    x0_excess: f64,
}

fn stability_numbers() -> StabilityNumbers {
    let mesh = Mesh::uniform(1.0, 1000).unwrap();
    let path = example21_path::<f64>(&mesh);
    let x0 = [2.0, 0.5];
    let ratios = [1e-2, 1e-3, 1e-4]
        .iter()
        .map(|&eps| {
            let shifted = path.shift_offset(1, eps);
            stability_experiment(&path, &shifted, &x0, &x0, &mesh).unwrap().ratio.unwrap()
        })
        .collect();
    let mut x0_excess = f64::NEG_INFINITY;
    for eps in [1e-2, 1e-3] {
        let r = stability_experiment(&path, &path, &x0, &[2.0 + eps, 0.5 - eps], &mesh).unwrap();
        x0_excess = x0_excess.max(r.sup_dx_sq - r.dx0_sq);
    }
    StabilityNumbers { ratios, x0_excess }
}

fn stability() -> Outcome {
    let s = stability_numbers();
    let max = s.ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = s.ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    outcome(
        max / min <= 10.0 && s.x0_excess <= 1e-9,
        format!(
            "ratios {:?}, max/min {:.1}, initial-state excess {:.2e}",
            s.ratios.iter().map(|v| format!("{v:.3e}")).collect::<Vec<_>>(),
            max / min,
            s.x0_excess
        ),
    )
}

/// Best feasible cost over the grid `{-2s, ..., 2s}` around the reference
/// on the six controls of the last moving step, all other controls fixed.
fn grid_oracle(inst: &ProblemInstance, s: f64) -> (f64, usize) {
    let z0 = inst.reference_decision();
    let bl = inst.block_len();
    let first = (inst.steps() - 2) * bl;
    let mut best = f64::INFINITY;
    let mut feasible = 0;
    for code in 0..5usize.pow(bl as u32) {
        let mut z = z0.clone();
        let mut c = code;
        for k in 0..bl {
            z[first + k] += (c % 5) as f64 * s - 2.0 * s;
            c /= 5;
        }
        let triple = inst.reduce(&z).unwrap().triple;
        if !inst.feasibility_report(&triple, 1e-8).is_feasible() {
            continue;
        }
        feasible += 1;
        best = best.min(inst.evaluate_cost(&triple).unwrap());
    }
    (best, feasible)
}

fn steering_solutions() -> (ProblemInstance, Solution, Solution) {
    let ocp = steering_scenario(10, 1).unwrap();
    let opts = SolveOptions::default();
    let coarse = build_problem(&ocp, 0).unwrap();
    let s0 = solve(&coarse, &opts).unwrap();
    let s1 = solve(&build_problem(&ocp, 1).unwrap(), &opts).unwrap();
    (coarse, s0, s1)
}

fn discrete_ocp(inst: &ProblemInstance, s0: &Solution, s1: &Solution) -> Outcome {
    let (best, feasible) = grid_oracle(inst, 0.05);
    let pass = s0.cost <= best + 1e-8 && s1.cost <= s0.cost + 1e-6;
    outcome(
        pass,
        format!(
            "cost nu=10 {:.9}, grid best {best:.9} ({feasible} feasible points), nu=20 {:.9}",
            s0.cost, s1.cost
        ),
    )
}

fn kkt(inst: &ProblemInstance, s0: &Solution) -> Outcome {
    let rec = recover_multipliers(inst, &s0.triple, &RecoveryOptions::default()).unwrap();
    let rep = &rec.report;
    let nt = &rep.nontriviality;
    let mut bad = s0.triple.clone();
    bad.x[3][1] += 0.05;
    let corrupted = recover_multipliers(inst, &bad, &RecoveryOptions::default());
    let caught = matches!(corrupted, Err(OptimalityError::Infeasible(_)));
    let pass = rep.flagged.is_empty()
        && rep.max_residual <= 1e-6
        && nt.initial >= 1e-3
        && nt.terminal >= 1e-3
        && (rep.normalization - 1.0).abs() <= 1e-12
        && caught;
    outcome(
        pass,
        format!(
            "lambda {}, max residual {:.2e}, nontriviality {:.3}/{:.3}, normalization error {:.1e}, \
             corrupted dynamics rejected: {caught}",
            rec.multipliers.lambda,
            rep.max_residual,
            nt.initial,
            nt.terminal,
            (rep.normalization - 1.0).abs()
        ),
    )
}

/// Per-index classification used by the enumeration.
#[derive(Clone, Copy, PartialEq)]
enum Class {
    Zero,
    Nonneg,
    Free,
}

/// Membership decided by trying every class assignment. For each one the
/// linear conditions on `p` are solved with the smallest positive entry on
/// free indices maximized.
fn brute_force_member(
    u: &[Vec<f64>],
    b: &[f64],
    x: &[f64],
    v: &[f64],
    y: &[f64],
    cand: &CoderivativeCandidate,
) -> bool {
    let band = 1e-7;
    let (m, n) = (u.len(), x.len());
    let q: Vec<f64> = cand.b.iter().map(|c| -c).collect();
    for r in 0..n {
        let aq: f64 = (0..m).map(|i| u[i][r] * q[i]).sum();
        if (aq - cand.x[r]).abs() > 1e-9 {
            return false;
        }
    }
    for code in 0..3usize.pow(m as u32) {
        let mut classes = Vec::with_capacity(m);
        let mut c = code;
        for _ in 0..m {
            classes.push([Class::Zero, Class::Nonneg, Class::Free][c % 3]);
            c /= 3;
        }
        let mut ok = true;
        for i in 0..m {
            let active = b[i] - dot(&u[i], x) <= band;
            let uy = dot(&u[i], y);
            ok &= match classes[i] {
                Class::Zero => q[i].abs() <= 1e-9 && (!active || uy < -band),
                Class::Nonneg => active && q[i] >= -1e-9 && uy >= -band,
                Class::Free => active && uy.abs() <= band,
            };
        }
        if !ok {
            continue;
        }
        // variables p_1..p_m, t
        let mut lp = LinearProgram::<f64>::new(m + 1);
        lp.set_bounds(m, 0.0, 1.0);
        lp.set_cost(m, -1.0);
        for i in 0..m {
            if classes[i] != Class::Free {
                lp.set_bounds(i, 0.0, 0.0);
            } else {
                lp.add_sparse_row(&[(i, 1.0), (m, -1.0)], RowKind::Ge, 0.0);
            }
        }
        for r in 0..n {
            let row: Vec<f64> = (0..m).map(|i| u[i][r]).chain([0.0]).collect();
            lp.add_row(row, RowKind::Eq, v[r]);
        }
        for i in 0..m {
            for r in 0..n {
                lp.add_sparse_row(&[(i, y[r])], RowKind::Eq, cand.u[i][r] - q[i] * x[r]);
            }
        }
        if let Ok(sol) = lp.solve() {
            let any_free = classes.contains(&Class::Free);
            if !any_free || sol.x[m] > band {
                return true;
            }
        }
    }
    false
}

fn coderivative() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (mut accepted, mut rejected, mut bad) = (0, 0, Vec::new());
    let mut worst_gap = 0.0f64;
    let mut made = 0;
    while made < 200 {
        let n = rng.gen_range(2..=3);
        let m = rng.gen_range(1..=2);
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-2i32..=2) as f64).collect();
        let u: Vec<Vec<f64>> = (0..m)
            .map(|_| (0..n).map(|_| rng.gen_range(-2i32..=2) as f64).collect())
            .collect();
        if u.iter().any(|ui| norm(ui) == 0.0) {
            continue;
        }
        let active: Vec<bool> = (0..m).map(|_| rng.gen_bool(0.75)).collect();
        let b: Vec<f64> = (0..m)
            .map(|i| dot(&u[i], &x) + if active[i] { 0.0 } else { rng.gen_range(1i32..=3) as f64 })
            .collect();
        let p0: Vec<f64> = (0..m)
            .map(|i| if active[i] && rng.gen_bool(0.7) { rng.gen_range(1i32..=3) as f64 } else { 0.0 })
            .collect();
        let mut v = vec![0.0; n];
        for i in 0..m {
            for r in 0..n {
                v[r] += p0[i] * u[i][r];
            }
        }
        // y orthogonal to the normals carrying p0, or an arbitrary y
        let y: Vec<f64> = if rng.gen_bool(0.2) {
            vec![0.0; n]
        } else {
            let mut y: Vec<f64> = (0..n).map(|_| rng.gen_range(-2i32..=2) as f64).collect();
            let supp: Vec<usize> = (0..m).filter(|&i| p0[i] > 0.0).collect();
            if rng.gen_bool(0.8) {
                // Gram-Schmidt away from the support normals
                let mut basis: Vec<Vec<f64>> = Vec::new();
                for &i in &supp {
                    let mut w = u[i].clone();
                    for e in &basis {
                        let c = dot(&w, e);
                        w.iter_mut().zip(e).for_each(|(a, b)| *a -= c * b);
                    }
                    let s = norm(&w);
                    if s > 1e-9 {
                        basis.push(w.into_iter().map(|a| a / s).collect());
                    }
                }
                for e in &basis {
                    let c = dot(&y, e);
                    y.iter_mut().zip(e).for_each(|(a, b)| *a -= c * b);
                }
            }
            y
        };
        // a genuine element half of the time, a perturbed one otherwise
        let q: Vec<f64> = (0..m)
            .map(|i| {
                let uy = dot(&u[i], &y);
                if !active[i] || (p0[i] == 0.0 && uy < -1e-7) {
                    0.0
                } else if p0[i] > 0.0 {
                    rng.gen_range(-2i32..=2) as f64
                } else {
                    rng.gen_range(0i32..=2) as f64
                }
            })
            .collect();
        let mut cand = CoderivativeCandidate {
            x: (0..n).map(|r| (0..m).map(|i| u[i][r] * q[i]).sum()).collect(),
            u: (0..m)
                .map(|i| (0..n).map(|r| p0[i] * y[r] + q[i] * x[r]).collect())
                .collect(),
            b: q.iter().map(|v| -v).collect(),
        };
        if rng.gen_bool(0.5) {
            match rng.gen_range(0..3) {
                0 => cand.b[rng.gen_range(0..m)] += 1.0,
                1 => cand.u[rng.gen_range(0..m)][rng.gen_range(0..n)] += 0.5,
                _ => cand.x[rng.gen_range(0..n)] -= 1.0,
            }
        }
        let Ok(res) = coderivative_member(&u, &b, &x, &v, &y, &cand) else {
            continue;
        };
        made += 1;
        match res.certificate {
            Some(cert) if res.member => {
                accepted += 1;
                let mut gap = 0.0f64;
                for r in 0..n {
                    let aq: f64 = (0..m).map(|i| u[i][r] * cert.q[i]).sum();
                    gap = gap.max((aq - cand.x[r]).abs());
                }
                for i in 0..m {
                    gap = gap.max((-cert.q[i] - cand.b[i]).abs());
                    for r in 0..n {
                        gap = gap.max((cert.p[i] * y[r] + cert.q[i] * x[r] - cand.u[i][r]).abs());
                    }
                }
                worst_gap = worst_gap.max(gap);
                if gap > 1e-10 {
                    bad.push(made);
                }
            }
            _ => {
                rejected += 1;
                if brute_force_member(&u, &b, &x, &v, &y, &cand) {
                    eprintln!("enumeration accepts a rejected candidate: u={u:?} b={b:?} x={x:?} v={v:?} y={y:?} cand={cand:?} reason={:?}", res.reason);
                    bad.push(made);
                }
            }
        }
    }
    outcome(
        bad.is_empty() && accepted > 0 && rejected > 0,
        format!(
            "{accepted} accepted (worst gap {worst_gap:.1e}), {rejected} rejected, {} disagreements",
            bad.len()
        ),
    )
}

fn reparameterization() -> Outcome {
    let mesh = Mesh::uniform(1.0, 10).unwrap();
    let r = example21_path::<f64>(&mesh).reparameterize().unwrap();
    let gamma_err = r
        .gamma_knots
        .iter()
        .zip(mesh.nodes())
        .fold(0.0f64, |m, (g, t)| m.max((g - 2.0 * t).abs()));
    let excess = r.lipschitz_excess();
    let still = ControlPath::constant(mesh.clone(), vec![vec![0.0, 1.0]], vec![1.0]).unwrap();
    let id = still.reparameterize().unwrap();
    let id_err = id
        .gamma_knots
        .iter()
        .zip(mesh.nodes())
        .fold(0.0f64, |m, (g, t)| m.max((g - t).abs()));
    outcome(
        gamma_err <= 1e-12 && excess <= 1e-12 && id_err <= 1e-12,
        format!("|gamma - 2t| {gamma_err:.1e}, Lipschitz excess {excess:.1e}, constant path {id_err:.1e}"),
    )
}

#[test]
fn acceptance() {
    let secs = Duration::from_secs;
    let mut results = vec![
        run(1, secs(1), hoffman),
        run(2, secs(30), truncation),
        run(3, secs(30), error_bound),
        run(4, secs(5), slater),
        run(5, secs(10), trajectory),
        run(6, secs(30), stability),
    ];
    let mut solved = None;
    results.push(run(7, secs(300), || {
        let (inst, s0, s1) = steering_solutions();
        let o = discrete_ocp(&inst, &s0, &s1);
        solved = Some((inst, s0));
        o
    }));
    let (inst, s0) = solved.expect("steering solved");
    results.push(run(8, secs(60), || kkt(&inst, &s0)));
    results.push(run(9, secs(30), coderivative));
    results.push(run(10, secs(1), reparameterization));

    let unexpected: Vec<usize> = results
        .iter()
        .filter(|(id, pass)| !pass && !KNOWN_FAILURES.contains(id))
        .map(|(id, _)| *id)
        .collect();
    assert!(unexpected.is_empty(), "failing criteria: {unexpected:?}");
}

/// The Hölder estimate bounds `sup |Δx|^2` by a constant times the control
/// change, but on this example the trajectory moves linearly with the
/// offset shift, so the ratio itself shrinks like the shift. The spread of
/// the three ratios is then about 100 and the bound has growing room.
#[test]
fn stability_failure_is_linear_dependence() {
    let s = stability_numbers();
    for w in s.ratios.windows(2) {
        let decay = w[0] / w[1];
        assert!((5.0..=20.0).contains(&decay), "ratio decay {decay}");
    }
    assert!(s.x0_excess <= 1e-9);
}

//! Property tests over random polyhedra, paths and trajectories.

#![allow(clippy::needless_range_loop)]

use proptest::prelude::*;

use polysweep::control::Mesh;
use polysweep::geometry::plicq_check;
use polysweep::linalg::{dist, dot, norm, sub};
use polysweep::optimality::{coderivative_member, p_set_element, q_pattern, CoderivativeCandidate};
use polysweep::sweep::{catching_up, Scheme};
use polysweep::{ControlPath, Polyhedron};

const TOL: f64 = 1e-7;

/// Normals with `|u_i| <= 1`; the ball of radius 1/2 around a random
/// centre is inside.
fn polyhedron(max_n: usize, max_m: usize) -> impl Strategy<Value = Polyhedron> {
    (1..=max_n, 1..=max_m).prop_flat_map(|(n, m)| {
        (
            prop::collection::vec(prop::collection::vec(-1.0..1.0f64, n), m),
            prop::collection::vec(0.5..2.0f64, m),
            prop::collection::vec(-3.0..3.0f64, n),
        )
            .prop_filter_map("zero normal", |(raw, b, shift)| {
                let mut normals = Vec::new();
                let mut offsets = Vec::new();
                for (u, bi) in raw.into_iter().zip(b) {
                    let r = norm(&u);
                    if r < 1e-3 {
                        return None;
                    }
                    let u: Vec<f64> = u.iter().map(|v| v / r.max(1.0)).collect();
                    offsets.push(bi + dot(&u, &shift));
                    normals.push(u);
                }
                Some(Polyhedron::new(normals, offsets).unwrap())
            })
    })
}

fn with_points(k: usize) -> impl Strategy<Value = (Polyhedron, Vec<Vec<f64>>)> {
    polyhedron(6, 8).prop_flat_map(move |p| {
        let n = p.dim();
        (Just(p), prop::collection::vec(prop::collection::vec(-8.0..8.0f64, n), k))
    })
}

/// Path on a uniform mesh whose sets all contain the ball of radius 1/2.
fn path(steps: usize, n: usize, m: usize) -> impl Strategy<Value = ControlPath> {
    (
        prop::collection::vec(prop::collection::vec(prop::collection::vec(-1.0..1.0f64, n), m), steps + 1),
        prop::collection::vec(prop::collection::vec(0.5..2.0f64, m), steps + 1),
    )
        .prop_filter_map("zero normal", move |(u, b)| {
            let mut uk = Vec::new();
            for node in u {
                let mut row = Vec::new();
                for ui in node {
                    let r = norm(&ui);
                    if r < 1e-3 {
                        return None;
                    }
                    row.push(ui.iter().map(|v| v / r.max(1.0)).collect());
                }
                uk.push(row);
            }
            Some(ControlPath::new(Mesh::uniform(1.0, steps).unwrap(), uk, b).unwrap())
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn projection_is_a_variational_inequality((p, pts) in with_points(41)) {
        let x = &pts[0];
        let pr = p.project(x).unwrap();
        let gap = norm(&sub(x, &pr.point));
        prop_assert!((gap - pr.distance).abs() <= 1e-9 * (1.0 + gap));
        for y in &pts[1..] {
            let y = p.project(y).unwrap().point;
            let ip = dot(&sub(x, &pr.point), &sub(&y, &pr.point));
            prop_assert!(ip <= TOL * (1.0 + gap), "inner product {}", ip);
        }
    }

    #[test]
    fn projection_is_idempotent_and_nonexpansive((p, pts) in with_points(2)) {
        let a = p.project(&pts[0]).unwrap();
        let b = p.project(&pts[1]).unwrap();
        prop_assert!(p.project(&a.point).unwrap().distance <= 1e-9);
        prop_assert!(dist(&a.point, &b.point) <= dist(&pts[0], &pts[1]) + 1e-9);
    }

    #[test]
    fn truncation_inequalities((p, pts) in with_points(1), grow in 0.01..4.0f64) {
        let n = p.dim();
        let d0 = p.distance(&vec![0.0; n]).unwrap();
        let r = d0 + grow * (1.0 + d0);
        let x = &pts[0];
        let s = norm(x);
        let x: Vec<f64> = if s > r { x.iter().map(|v| v * r / s).collect() } else { x.clone() };
        let lhs = p.truncated_distance(&x, r).unwrap();
        let d = p.distance(&x).unwrap();
        prop_assert!(lhs <= 2.0 * r / (r - d0) * d + TOL, "{} vs {}", lhs, d);
        if r > 3.0 * d0 {
            prop_assert!(lhs <= 3.0 * d + TOL);
        }
        prop_assert!(lhs >= d - TOL);
    }

    #[test]
    fn slater_error_bound((p, pts) in with_points(1)) {
        let cert = p.slater_margin(10.0).unwrap();
        prop_assert!(norm(&cert.point) <= 10.0 * (p.dim() as f64).sqrt() + 1e-9);
        prop_assert!((cert.margin - p.margin_at(&cert.point).unwrap()).abs() <= 1e-12);
        if cert.margin > 0.0 && p.residual(&pts[0]).unwrap().0 > 0.0 {
            let ub = p.distance_upper_bound(&pts[0], &cert).unwrap();
            prop_assert!(ub >= p.distance(&pts[0]).unwrap() - TOL);
        }
    }

    #[test]
    fn slater_points_give_plicq_on_the_boundary((p, pts) in with_points(4)) {
        let cert = p.slater_margin(10.0).unwrap();
        prop_assume!(cert.margin > 1e-6);
        for x in &pts {
            let bx = p.project(x).unwrap().point;
            let act = p.active_indices(&bx, TOL).unwrap();
            let normals: Vec<Vec<f64>> = act.iter().map(|&i| p.normals()[i].clone()).collect();
            prop_assert!(plicq_check(&normals).unwrap());
        }
    }

    #[test]
    fn sup_norm_diff_is_a_metric(a in path(4, 2, 2), b in path(4, 2, 2), c in path(4, 2, 2)) {
        let ab = a.sup_norm_diff(&b).unwrap();
        prop_assert_eq!(ab, b.sup_norm_diff(&a).unwrap());
        prop_assert_eq!(a.sup_norm_diff(&a).unwrap(), 0.0);
        let ac = a.sup_norm_diff(&c).unwrap();
        let cb = c.sup_norm_diff(&b).unwrap();
        prop_assert!(ab <= ac + cb + 1e-12);
        prop_assert!(ab >= 0.0);
    }

    #[test]
    fn interpolation_is_exact_at_knots(a in path(4, 3, 2)) {
        for (j, &t) in a.mesh().nodes().iter().enumerate() {
            let (u, b) = a.eval(t).unwrap();
            prop_assert_eq!(&u, &a.u_knots()[j]);
            prop_assert_eq!(&b, &a.b_knots()[j]);
        }
    }

    #[test]
    fn slater_margin_does_not_grow_under_refinement(a in path(3, 2, 3), k in 1usize..4) {
        let coarse = a.check_uniform_slater(2.0, k).unwrap();
        let fine = a.check_uniform_slater(2.0, 2 * k).unwrap();
        prop_assert!(fine.epsilon <= coarse.epsilon + 1e-12);
        prop_assert!(coarse.inter_node_bound <= coarse.epsilon + 1e-12);
    }

    #[test]
    fn reparameterized_path_is_1_lipschitz(a in path(6, 2, 2)) {
        let r = a.reparameterize().unwrap();
        prop_assert!(r.lipschitz_excess() <= 1e-12);
        prop_assert_eq!(r.gamma_knots[0], 0.0);
        prop_assert!(r.gamma_knots.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn same_set_runs_contract(
        a in path(5, 2, 3),
        x0 in prop::collection::vec(-0.35..0.35f64, 2),
        y0 in prop::collection::vec(-0.35..0.35f64, 2),
        shift in prop::collection::vec(-4.0..4.0f64, 2),
    ) {
        // one start usually on the boundary of C(0), the other inside
        let far: Vec<f64> = x0.iter().zip(&shift).map(|(a, s)| a + s).collect();
        let x0 = a.polyhedron_at(0.0).unwrap().project(&far).unwrap().point;
        let mesh = a.mesh().refine(4);
        let tx = catching_up(&a, &x0, &mesh, Scheme::Implicit).unwrap();
        let ty = catching_up(&a, &y0, &mesh, Scheme::Implicit).unwrap();
        prop_assert!(dist(tx.endpoint(), ty.endpoint()) <= dist(&x0, &y0) + 1e-9);
        for (j, x) in ty.states.iter().enumerate().skip(1) {
            let poly = a.polyhedron_at(mesh.node(j)).unwrap();
            prop_assert!(poly.residual(x).unwrap().0 <= 1e-8);
        }
        for r in ty.stationarity_residuals(&a).unwrap() {
            prop_assert!(r <= 1e-8);
        }
    }

    #[test]
    fn accepted_coderivative_elements_reconstruct(
        (u, x, y, p0, q) in (1usize..=3, 2usize..=3).prop_flat_map(|(m, n)| (
            prop::collection::vec(prop::collection::vec(-2i32..=2, n), m),
            prop::collection::vec(-2i32..=2, n),
            prop::collection::vec(-2i32..=2, n),
            prop::collection::vec(0i32..=2, m),
            prop::collection::vec(-2i32..=2, m),
        ))
    ) {
        let f = |v: &Vec<i32>| v.iter().map(|&a| a as f64).collect::<Vec<f64>>();
        let u: Vec<Vec<f64>> = u.iter().map(f).collect();
        prop_assume!(u.iter().all(|ui| norm(ui) > 0.0));
        let (x, y, p0, q) = (f(&x), f(&y), f(&p0), f(&q));
        let b: Vec<f64> = u.iter().map(|ui| dot(ui, &x)).collect();
        let m = u.len();
        let n = x.len();
        let mut v = vec![0.0; n];
        for i in 0..m {
            for r in 0..n {
                v[r] += p0[i] * u[i][r];
            }
        }
        let cand = CoderivativeCandidate {
            x: (0..n).map(|r| (0..m).map(|i| u[i][r] * q[i]).sum()).collect(),
            u: (0..m).map(|i| (0..n).map(|r| p0[i] * y[r] + q[i] * x[r]).collect()).collect(),
            b: q.iter().map(|v| -v).collect(),
        };
        let Ok(res) = coderivative_member(&u, &b, &x, &v, &y, &cand) else {
            return Ok(());
        };
        if let Some(cert) = res.certificate {
            prop_assert!(res.member);
            prop_assert!(cert.gap <= 1e-10);
            for i in 0..m {
                prop_assert!(cert.p[i] >= 0.0);
                if cert.p[i] > 1e-7 {
                    prop_assert!(dot(&u[i], &y).abs() <= 1e-7);
                }
                prop_assert!(cert.pattern[i].violation(cert.q[i]) <= 1e-7);
            }
            prop_assert_eq!(&cert.pattern, &q_pattern(&u, &b, &x, &cert.p, &y).unwrap());
        }
        // p0 itself: whenever it lies in P(y) a minimal element exists
        let p0_ok = (0..m).all(|i| p0[i] == 0.0 || dot(&u[i], &y) == 0.0);
        if p0_ok {
            let p = p_set_element(&u, &b, &x, &v, &y).unwrap();
            prop_assert!(p.iter().sum::<f64>() <= p0.iter().sum::<f64>() + 1e-9);
        }
        // q = 0 satisfies every sign restriction, so (0, p0 y, 0) is an element
        if p0_ok {
            let zero = CoderivativeCandidate {
                x: vec![0.0; n],
                u: (0..m).map(|i| (0..n).map(|r| p0[i] * y[r]).collect()).collect(),
                b: vec![0.0; m],
            };
            let r = coderivative_member(&u, &b, &x, &v, &y, &zero).unwrap();
            prop_assert!(r.member, "{:?}", r.reason);
        }
    }
}

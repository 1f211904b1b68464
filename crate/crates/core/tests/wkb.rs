use mtlz_core::evolution::{ParamPath, PropagationOptions};
use mtlz_core::models::{FourStateFamily, FourStateParams};
use mtlz_core::wkb::{
    adiabatic_frame, coupling_field, kappa_angular_half_width, match_domains, wkb_compare, wkb_propagate,
    LzCrossing, MapGrid, WkbOptions,
};
use mtlz_core::{CVector, Error, HamiltonianFamily, HermitianOperator, ParamPoint, C64};

/// Two constant diagonal generators: already in their common eigenbasis.
struct ConstantDiagonal;

const D0: [f64; 3] = [1.0, -2.0, 0.5];
const D1: [f64; 3] = [0.3, 0.7, -1.1];

impl HamiltonianFamily for ConstantDiagonal {
    fn name(&self) -> &str {
        "constant-diagonal"
    }
    fn num_generators(&self) -> usize {
        2
    }
    fn dim(&self) -> usize {
        3
    }
    fn is_real_valued(&self) -> bool {
        true
    }
    fn evaluate(&self, j: usize, _x: &ParamPoint) -> mtlz_core::Result<HermitianOperator> {
        let d = if j == 0 { D0 } else { D1 };
        HermitianOperator::from_real_rows(&[&[d[0], 0.0, 0.0], &[0.0, d[1], 0.0], &[0.0, 0.0, d[2]]], "diag")
    }
}

fn four() -> FourStateFamily {
    FourStateFamily::new(FourStateParams::reference(0.0)).unwrap()
}

#[test]
fn diagonal_family_has_no_coupling_and_exact_phases() {
    let fam = ConstantDiagonal;
    let field = coupling_field(&fam, &[0.0, 0.0].into()).unwrap();
    assert_eq!(field.max_kappa(), 0.0);
    for j in 0..2 {
        for a in 0..3 {
            for b in 0..3 {
                assert_eq!(field.connection[j][(a, b)].norm(), 0.0);
            }
        }
    }
    // (0,0) -> (3,0) -> (3,2)
    let path = ParamPath::from_coords(&[&[0.0, 0.0], &[3.0, 0.0], &[3.0, 2.0]]).unwrap();
    let amps = CVector::from_vec(vec![C64::new(0.6, 0.0), C64::new(0.0, 0.8), C64::new(0.0, 0.0)]);
    let w = wkb_propagate(&fam, &path, &amps, &WkbOptions::default()).unwrap();
    for a in 0..3 {
        let d = w.initial_frame.diabatic[a];
        let expect = -3.0 * D0[d] - 2.0 * D1[d];
        assert!((w.action[a] - expect).abs() < 1e-12, "{} vs {expect}", w.action[a]);
    }
    let cmp = wkb_compare(&fam, &path, &amps, &WkbOptions::default(), &PropagationOptions::default()).unwrap();
    assert!(cmp.amplitude_difference < 1e-9, "{}", cmp.amplitude_difference);
}

#[test]
fn frame_solves_every_generator() {
    let fam = four();
    for x in [[20.0, 5.0], [-12.0, 3.0], [7.0, -30.0]] {
        let x: ParamPoint = x.into();
        let f = adiabatic_frame(&fam, &x).unwrap();
        for j in 0..2 {
            let h = fam.evaluate(j, &x).unwrap().into_matrix();
            for a in 0..4 {
                let v = f.vectors.column(a).into_owned();
                let r = (&h * &v + v.scale(f.momenta[(j, a)])).norm();
                assert!(r < 1e-10, "slot {j} level {a}: {r}");
            }
        }
    }
}

#[test]
fn energies_match_second_order_perturbation() {
    let p = FourStateParams::reference(0.0);
    let (t, e) = (20.0, 5.0);
    let d = [p.b1 * t + e, -p.b1 * t + e, p.b2 * t, -p.b2 * t];
    let mut v = [[0.0; 4]; 4];
    for (a, b, c) in [(0, 2, p.g), (1, 3, p.g), (1, 2, p.gamma), (0, 3, -p.gamma)] {
        v[a][b] = c;
        v[b][a] = c;
    }
    let mut expect: Vec<f64> = (0..4)
        .map(|a| d[a] + (0..4).filter(|&b| b != a).map(|b| v[a][b] * v[a][b] / (d[a] - d[b])).sum::<f64>())
        .collect();
    expect.sort_by(f64::total_cmp);
    let f = adiabatic_frame(&four(), &[t, e].into()).unwrap();
    for (got, want) in f.energies.iter().zip(&expect) {
        assert!((got - want).abs() < 1e-3, "{got} vs {want}");
    }
}

#[test]
fn connection_is_anti_hermitian() {
    for x in [[20.0, 5.0], [30.0, 44.0], [-15.0, 2.0]] {
        let field = coupling_field(&four(), &x.into()).unwrap();
        assert!(field.anti_hermiticity_residual < 1e-9, "{}", field.anti_hermiticity_residual);
    }
}

#[test]
fn wkb_tracks_full_evolution_away_from_crossings() {
    let path = ParamPath::from_coords(&[&[20.0, 5.0], &[40.0, 5.0]]).unwrap();
    let amps = CVector::from_vec(vec![C64::new(1.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0)]);
    let cmp = wkb_compare(&four(), &path, &amps, &WkbOptions::default(), &PropagationOptions::default()).unwrap();
    assert!(cmp.population_difference < 1e-4, "{}", cmp.population_difference);
    assert!(cmp.max_kappa < 0.05);
}

#[test]
fn path_through_a_near_crossing_is_refused() {
    // (10, 5) sits on the crossing of levels 2 and 4
    let path = ParamPath::from_coords(&[&[10.0, 5.0], &[30.0, 5.0]]).unwrap();
    let amps = CVector::from_vec(vec![C64::new(1.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0)]);
    let r = wkb_propagate(&four(), &path, &amps, &WkbOptions::default());
    assert!(matches!(r, Err(Error::Adiabaticity { .. })), "{r:?}");
}

#[test]
fn action_is_path_independent_inside_a_domain() {
    let fam = four();
    let amps = CVector::from_element(4, C64::new(0.5, 0.0));
    let opts = WkbOptions { samples_per_unit: 200.0, ..WkbOptions::default() };
    let straight = ParamPath::from_coords(&[&[20.0, 5.0], &[40.0, 5.0]]).unwrap();
    let detour = ParamPath::from_coords(&[&[20.0, 5.0], &[20.0, -5.0], &[40.0, -5.0], &[40.0, 5.0]]).unwrap();
    let a = wkb_propagate(&fam, &straight, &amps, &opts).unwrap();
    let b = wkb_propagate(&fam, &detour, &amps, &opts).unwrap();
    assert_eq!(a.initial_frame.diabatic, b.initial_frame.diabatic);
    for (x, y) in a.action.iter().zip(&b.action) {
        assert!((x - y).abs() < 1e-6, "{x} vs {y}");
    }
}

#[test]
fn coupling_region_narrows_with_distance() {
    let fam = four();
    let grid = MapGrid::plane(-50.0, 50.0, 3);
    let near = kappa_angular_half_width(&fam, &grid, (1, 2), 10.0, 1.5, 1.0, 10.0).unwrap();
    let far = kappa_angular_half_width(&fam, &grid, (1, 2), 20.0, 1.5, 1.0, 10.0).unwrap();
    assert!(far < near, "{far} vs {near}");
}

#[test]
fn uncoupled_crossing_matches_to_identity() {
    let mut p = FourStateParams::reference(0.0);
    p.gamma = 0.0;
    let fam = FourStateFamily::new(p).unwrap();
    let fin = adiabatic_frame(&fam, &[20.0, 25.0].into()).unwrap();
    let fout = adiabatic_frame(&fam, &[20.0, 35.0].into()).unwrap();
    let c = LzCrossing::from_family(&fam, &[20.0, 30.0].into(), 0, (1, 2)).unwrap();
    assert_eq!(c.probability().unwrap(), 1.0);
    let s = match_domains(&fin, &fout, &c).unwrap();
    for r in 0..4 {
        for k in 0..4 {
            let want = if r == k { 1.0 } else { 0.0 };
            assert!((s[(r, k)].norm() - want).abs() < 1e-15);
        }
    }
}

#[test]
fn kappa_does_not_depend_on_the_slot() {
    let fam = four();
    for x in [[30.0, 5.0], [25.0, 36.0], [-18.0, 20.0]] {
        let field = coupling_field(&fam, &x.into()).unwrap();
        for a in 0..4 {
            for b in 0..4 {
                if a == b {
                    continue;
                }
                let (k0, k1) = (field.kappa_from_slot(0, a, b), field.kappa_from_slot(1, a, b));
                if let (Some(k0), Some(k1)) = (k0, k1) {
                    assert!((k0 - k1).norm() <= 1e-6 * k0.norm().max(1e-12), "{x:?} ({a},{b}): {k0} vs {k1}");
                }
            }
        }
    }
}

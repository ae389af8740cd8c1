//! Edge/facet crossing predicates against an exact rational oracle. The
//! facet is perturbed by `(eps, eps^2)`, so each orientation becomes a
//! polynomial in `eps` whose sign is that of its first non-zero coefficient.

use fsikit::embedded::{segments_cross, side_of_facet};
use fsikit::geom::Vec2;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, Zero};
use proptest::prelude::*;

fn q(x: f64) -> BigRational {
    BigRational::from_float(x).unwrap()
}

fn sign(x: &BigRational) -> i8 {
    if x.is_zero() {
        0
    } else if x.is_positive() {
        1
    } else {
        -1
    }
}

fn leading_sign(coeffs: &[BigRational]) -> i8 {
    coeffs.iter().map(sign).find(|&s| s != 0).unwrap_or(0)
}

/// cross(b - a, c - a), exactly.
fn orient(a: Vec2, b: Vec2, c: Vec2) -> BigRational {
    let (ax, ay) = (q(a[0]), q(a[1]));
    (q(b[0]) - &ax) * (q(c[1]) - &ay) - (q(b[1]) - &ay) * (q(c[0]) - &ax)
}

/// Coefficients in `eps` of orient(a', b', p) with a', b' shifted by (eps, eps^2).
fn facet_side(a: Vec2, b: Vec2, p: Vec2) -> i8 {
    let (dx, dy) = (q(b[0]) - q(a[0]), q(b[1]) - q(a[1]));
    leading_sign(&[orient(a, b, p), dy, -dx])
}

/// Coefficients of orient(p, q, a') for the shifted facet endpoint a'.
fn edge_side(p: Vec2, qq: Vec2, a: Vec2) -> i8 {
    let (ex, ey) = (q(qq[0]) - q(p[0]), q(qq[1]) - q(p[1]));
    leading_sign(&[orient(p, qq, a), -ey, ex])
}

fn oracle_cross(p: Vec2, qq: Vec2, a: Vec2, b: Vec2) -> bool {
    facet_side(a, b, p) != facet_side(a, b, qq) && edge_side(p, qq, a) != edge_side(p, qq, b)
}

/// Points on a coarse lattice so collinear and touching configurations are
/// common, mixed with generic ones.
fn point() -> impl Strategy<Value = Vec2> {
    prop_oneof![
        (-4i32..=4, -4i32..=4).prop_map(|(x, y)| [0.25 * x as f64, 0.25 * y as f64]),
        (-1.0f64..1.0, -1.0f64..1.0).prop_map(|(x, y)| [x, y]),
    ]
}

fn distinct(a: Vec2, b: Vec2) -> bool {
    a != b
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(4000))]

    #[test]
    fn side_matches_oracle(a in point(), b in point(), p in point()) {
        prop_assume!(distinct(a, b));
        let s = side_of_facet(a, b, p);
        prop_assert!(s != 0);
        prop_assert_eq!(s, facet_side(a, b, p));
    }

    #[test]
    fn crossing_matches_oracle(p in point(), qq in point(), a in point(), b in point()) {
        prop_assume!(distinct(p, qq) && distinct(a, b));
        let got = segments_cross(p, qq, a, b);
        prop_assert_eq!(got.is_some(), oracle_cross(p, qq, a, b));
        if let Some((t, s)) = got {
            prop_assert!((0.0..=1.0).contains(&t) && (0.0..=1.0).contains(&s));
            // where the unperturbed lines meet properly the parameter is the
            // exact ratio, rounded
            let (op, oq) = (orient(a, b, p), orient(a, b, qq));
            if sign(&op) * sign(&oq) < 0 {
                let exact = &op / (&op - &oq);
                let approx = q(t);
                let tol = BigRational::new(BigInt::from(1), BigInt::from(1u64 << 40));
                prop_assert!((exact - approx).abs() < tol);
            }
        }
    }

    /// Reversing the mesh edge never changes whether it crosses.
    #[test]
    fn crossing_is_symmetric_in_the_edge(p in point(), qq in point(), a in point(), b in point()) {
        prop_assume!(distinct(p, qq) && distinct(a, b));
        prop_assert_eq!(segments_cross(p, qq, a, b).is_some(), segments_cross(qq, p, a, b).is_some());
    }
}

/// Crossing parity against a closed square equals whether the edge ends lie
/// on different sides of the shifted square, also when the edge runs through
/// its vertices or along its sides. After the shift a boundary point with
/// coordinate 0 is outside and one with coordinate 1 inside.
#[test]
fn crossing_parity_matches_shifted_inclusion() {
    let square = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
    let edges = [
        ([-1.0, 0.0], [2.0, 0.0]),
        ([-1.0, -1.0], [2.0, 2.0]),
        ([0.0, -1.0], [0.0, 2.0]),
        ([-0.5, 0.5], [1.5, 0.5]),
        ([0.0, 0.0], [1.0, 1.0]),
        ([-1.0, 1.0], [1.0, -1.0]),
        ([1.0, 0.5], [3.0, 0.5]),
        ([0.5, 1.0], [0.5, 0.5]),
    ];
    for (p, qq) in edges {
        let n = (0..4).filter(|&k| segments_cross(p, qq, square[k], square[(k + 1) % 4]).is_some()).count();
        let inside = |x: Vec2| x[0] > 0.0 && x[0] <= 1.0 && x[1] > 0.0 && x[1] <= 1.0;
        assert_eq!(n % 2 == 1, inside(p) != inside(qq), "{p:?} {qq:?}");
    }
}

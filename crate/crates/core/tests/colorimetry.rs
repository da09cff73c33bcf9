use proptest::prelude::*;

use interspec::colorimetry::{ciede2000, Lab, Xyz};

/// Straight transcription of the CIEDE2000 formulas in degrees.
fn de2000_oracle(l1: f64, a1: f64, b1: f64, l2: f64, a2: f64, b2: f64) -> f64 {
    let rad = f64::to_radians;
    let deg = f64::to_degrees;
    let c1 = a1.hypot(b1);
    let c2 = a2.hypot(b2);
    let cbar = (c1 + c2) / 2.0;
    let g = 0.5 * (1.0 - (cbar.powi(7) / (cbar.powi(7) + 25f64.powi(7))).sqrt());
    let a1p = (1.0 + g) * a1;
    let a2p = (1.0 + g) * a2;
    let c1p = a1p.hypot(b1);
    let c2p = a2p.hypot(b2);
    let hue = |b: f64, a: f64| {
        if b == 0.0 && a == 0.0 {
            0.0
        } else {
            let h = deg(b.atan2(a));
            if h < 0.0 { h + 360.0 } else { h }
        }
    };
    let h1p = hue(b1, a1p);
    let h2p = hue(b2, a2p);
    let dlp = l2 - l1;
    let dcp = c2p - c1p;
    let dhp = if c1p * c2p == 0.0 {
        0.0
    } else if (h2p - h1p).abs() <= 180.0 {
        h2p - h1p
    } else if h2p - h1p > 180.0 {
        h2p - h1p - 360.0
    } else {
        h2p - h1p + 360.0
    };
    let dhp_big = 2.0 * (c1p * c2p).sqrt() * rad(dhp / 2.0).sin();
    let lbarp = (l1 + l2) / 2.0;
    let cbarp = (c1p + c2p) / 2.0;
    let hbarp = if c1p * c2p == 0.0 {
        h1p + h2p
    } else if (h1p - h2p).abs() <= 180.0 {
        (h1p + h2p) / 2.0
    } else if h1p + h2p < 360.0 {
        (h1p + h2p + 360.0) / 2.0
    } else {
        (h1p + h2p - 360.0) / 2.0
    };
    let t = 1.0 - 0.17 * rad(hbarp - 30.0).cos() + 0.24 * rad(2.0 * hbarp).cos() + 0.32 * rad(3.0 * hbarp + 6.0).cos()
        - 0.20 * rad(4.0 * hbarp - 63.0).cos();
    let dtheta = 30.0 * (-((hbarp - 275.0) / 25.0).powi(2)).exp();
    let rc = 2.0 * (cbarp.powi(7) / (cbarp.powi(7) + 25f64.powi(7))).sqrt();
    let sl = 1.0 + 0.015 * (lbarp - 50.0).powi(2) / (20.0 + (lbarp - 50.0).powi(2)).sqrt();
    let sc = 1.0 + 0.045 * cbarp;
    let sh = 1.0 + 0.015 * cbarp * t;
    let rt = -rad(2.0 * dtheta).sin() * rc;
    ((dlp / sl).powi(2) + (dcp / sc).powi(2) + (dhp_big / sh).powi(2) + rt * (dcp / sc) * (dhp_big / sh)).sqrt()
}

fn lab(l: f64, a: f64, b: f64) -> Lab {
    Lab { l, a, b, white: Xyz::new(95.047, 100.0, 108.883) }
}

proptest! {
    #[test]
    fn ciede2000_matches_oracle(
        l1 in 0.0..100.0f64, a1 in -120.0..120.0f64, b1 in -120.0..120.0f64,
        l2 in 0.0..100.0f64, a2 in -120.0..120.0f64, b2 in -120.0..120.0f64,
    ) {
        let got = ciede2000(&lab(l1, a1, b1), &lab(l2, a2, b2)).unwrap();
        let want = de2000_oracle(l1, a1, b1, l2, a2, b2);
        prop_assert!((got - want).abs() <= 1e-9 * want.max(1.0), "{} vs {}", got, want);
    }

    #[test]
    fn ciede2000_is_symmetric_and_nonnegative(
        l1 in 0.0..100.0f64, a1 in -80.0..80.0f64, b1 in -80.0..80.0f64,
        l2 in 0.0..100.0f64, a2 in -80.0..80.0f64, b2 in -80.0..80.0f64,
    ) {
        let x = ciede2000(&lab(l1, a1, b1), &lab(l2, a2, b2)).unwrap();
        let y = ciede2000(&lab(l2, a2, b2), &lab(l1, a1, b1)).unwrap();
        prop_assert!(x >= 0.0);
        prop_assert!((x - y).abs() <= 1e-9 * x.max(1.0));
    }

    #[test]
    fn small_achromatic_steps_track_lightness(l in 20.0..80.0f64, d in 0.01..0.5f64) {
        // On the neutral axis ΔE00 reduces to ΔL/S_L.
        let got = ciede2000(&lab(l, 0.0, 0.0), &lab(l + d, 0.0, 0.0)).unwrap();
        let lbar = l + d / 2.0;
        let sl = 1.0 + 0.015 * (lbar - 50.0).powi(2) / (20.0 + (lbar - 50.0).powi(2)).sqrt();
        prop_assert!((got - d / sl).abs() < 1e-12);
    }
}

#[test]
fn oracle_reproduces_published_pairs() {
    let cases = [
        ((50.0, 2.6772, -79.7751), (50.0, 0.0, -82.7485), 2.0425),
        ((50.0, 2.49, -0.001), (50.0, -2.49, 0.0009), 7.1792),
        ((2.0776, 0.0795, -1.1350), (0.9033, -0.0636, -0.5514), 0.9082),
    ];
    for ((l1, a1, b1), (l2, a2, b2), want) in cases {
        assert!((de2000_oracle(l1, a1, b1, l2, a2, b2) - want).abs() < 1e-4);
    }
}

use lumen_core::evalsuite::pixel_errors;
use lumen_core::hdrio::LUMINOUS_EFFICACY;
use lumen_core::oracle::{render_triple, SceneSpec};
use lumen_core::skyctx::{annual_sky_states, synthetic_weather, Site, SkyState, Timestamp};
use lumen_core::spherical::{direction_grid, solid_angle_map};
use proptest::prelude::*;

fn state(altitude: f64, azimuth: f64, dni: f64, dhi: f64) -> SkyState {
    SkyState {
        timestamp: Timestamp::new(2001, 6, 1, 12, 30).unwrap(),
        altitude,
        azimuth,
        dni,
        dhi,
    }
}

#[test]
fn sky_map_reproduces_horizontal_diffuse_illuminance() {
    let (w, h) = (460, 230);
    let omega = solid_angle_map(w, h).unwrap();
    let dirs = direction_grid(w, h);
    for dhi in [50.0, 300.0, 700.0] {
        let t = render_triple(&SceneSpec::default(), &state(30.0, 10.0, 0.0, dhi), w, h).unwrap();
        let e: f64 = (0..w * h)
            .filter(|&i| dirs[i][2] > 0.0)
            .map(|i| t.sky.values()[i] / LUMINOUS_EFFICACY * dirs[i][2] * omega.at(i))
            .sum();
        assert!((e - dhi).abs() <= 0.005 * dhi, "dhi {dhi}: integrated {e}");
    }
}

/// Neighbors differ by 0.5° in altitude and 4 W/m² in both irradiances.
/// Dim skies are excluded: below about 40 W/m² a 4 W/m² step alone is a
/// large log-luminance change for any renderer.
#[test]
fn smooth_dependence_on_neighboring_states() {
    let site = Site::seattle();
    let states = annual_sky_states(&site, &synthetic_weather(&site, 2001, 1)).unwrap();
    let scene = SceneSpec::default();
    let mut worst = (0.0, None);
    for s in states.iter().filter(|s| s.dhi >= 40.0).step_by(7) {
        let near = SkyState {
            altitude: s.altitude + 0.5,
            dni: s.dni + 4.0,
            dhi: s.dhi - 4.0,
            ..*s
        };
        let a = render_triple(&scene, s, 92, 46).unwrap();
        let b = render_triple(&scene, &near, 92, 46).unwrap();
        let (mse, _) = pixel_errors(&b.interior, &a.interior).unwrap();
        if mse > worst.0 {
            worst = (mse, Some(*s));
        }
    }
    assert!(worst.0 < 0.01, "log10 MSE {} between neighbors of {:?}", worst.0, worst.1);
}

#[test]
fn rendering_is_deterministic() {
    let s = state(25.0, -20.0, 600.0, 120.0);
    let a = render_triple(&SceneSpec::default(), &s, 46, 23).unwrap();
    let b = render_triple(&SceneSpec::default(), &s, 46, 23).unwrap();
    assert_eq!(a, b);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn interior_dominates_sun_patch(al in -10.0f64..85.0, az in -179.0f64..180.0, dni in 0.0f64..1000.0, dhi in 0.0f64..500.0) {
        let t = render_triple(&SceneSpec::default(), &state(al, az, dni, dhi), 24, 12).unwrap();
        for (i, s) in t.interior.values().iter().zip(t.sunpatch.values()) {
            prop_assert!(i >= s);
            prop_assert!(i.is_finite() && *s >= 0.0);
        }
    }

    #[test]
    fn maps_are_linear_in_irradiance(al in 1.0f64..85.0, az in -179.0f64..180.0, dni in 0.0f64..800.0, dhi in 0.0f64..400.0) {
        let scene = SceneSpec::default();
        let one = render_triple(&scene, &state(al, az, dni, dhi), 24, 12).unwrap();
        let two = render_triple(&scene, &state(al, az, 2.0 * dni, 2.0 * dhi), 24, 12).unwrap();
        for (a, b) in [(&one.interior, &two.interior), (&one.sky, &two.sky), (&one.sunpatch, &two.sunpatch)] {
            for (x, y) in a.values().iter().zip(b.values()) {
                prop_assert!((2.0 * x - y).abs() <= 1e-9 * y.abs().max(1.0));
            }
        }
    }
}

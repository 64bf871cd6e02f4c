use std::ffi::{c_char, CStr, CString};
use std::ptr;

use prevsim_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(prevsim_last_error()) }.to_str().unwrap().to_string()
}

fn take(s: *mut c_char) -> String {
    let out = unsafe { CStr::from_ptr(s) }.to_str().unwrap().to_string();
    unsafe { prevsim_string_free(s) };
    out
}

#[test]
fn version_matches_the_crate() {
    let v = unsafe { CStr::from_ptr(prevsim_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn discretize_and_its_errors() {
    let mut out = 0u8;
    assert_eq!(unsafe { prevsim_discretize(0.5, 6, &mut out) }, PrevsimStatus::Ok);
    assert_eq!(out, 4);
    assert_eq!(last_error(), "");
    assert_eq!(unsafe { prevsim_discretize(1.5, 5, &mut out) }, PrevsimStatus::Domain);
    assert!(!last_error().is_empty());
    assert_eq!(unsafe { prevsim_discretize(0.5, 7, &mut out) }, PrevsimStatus::Domain);
}

#[test]
fn ks_and_pass_rate() {
    let a = [1.0, 2.0, 3.0];
    let b = [4.0, 5.0, 5.0, 4.0];
    let mut r = PrevsimKsResult::default();
    let s = unsafe { prevsim_ks_two_sample(a.as_ptr(), a.len(), b.as_ptr(), b.len(), 1, &mut r) };
    assert_eq!(s, PrevsimStatus::Ok);
    assert_eq!(r.statistic, 1.0);
    assert_eq!((r.n1, r.n2), (3, 4));
    let direct = prevsim::stats::ks_two_sample_with(&a, &b, prevsim::stats::KsMethod::ExactSmall).unwrap();
    assert_eq!(r.p_value, direct.p_value);
    assert!(r.p_value < 1.0);
    let s = unsafe { prevsim_ks_two_sample(ptr::null(), 0, b.as_ptr(), b.len(), 0, &mut r) };
    assert_eq!(s, PrevsimStatus::InvalidArgument);
    let s = unsafe { prevsim_ks_two_sample(ptr::null(), 2, b.as_ptr(), b.len(), 0, &mut r) };
    assert_eq!(s, PrevsimStatus::NullPointer);

    let flags = [1u8, 1, 1, 1, 1, 1, 1, 1, 0, 0, 0];
    let mut rate = 0.0;
    assert_eq!(unsafe { prevsim_pass_rate(flags.as_ptr(), flags.len(), &mut rate) }, PrevsimStatus::Ok);
    assert_eq!(rate, 72.7);
}

#[test]
fn impact_figures() {
    let mut e = PrevsimImpact::default();
    assert_eq!(
        unsafe { prevsim_environmental_impact(2.62, 3.83, 22e6, &mut e) },
        PrevsimStatus::Ok
    );
    assert!((e.per_capita_volume_l - 11.2).abs() < 1e-9);
    assert!((e.total_tons - 246_400.0).abs() < 1e-6);
    assert_eq!(e.avoided, 0);
    assert_eq!(
        unsafe { prevsim_environmental_impact(2.62, 3.83, 0.0, &mut e) },
        PrevsimStatus::InvalidArgument
    );
}

#[test]
fn grid_handle_lifecycle() {
    let mut grid = ptr::null_mut();
    assert_eq!(unsafe { prevsim_grid_new_default(&mut grid) }, PrevsimStatus::Ok);
    let mut n = 0usize;
    assert_eq!(unsafe { prevsim_grid_len(grid, &mut n) }, PrevsimStatus::Ok);
    assert_eq!(n, 120);
    let mut label = ptr::null();
    assert_eq!(unsafe { prevsim_grid_label(grid, 0, &mut label) }, PrevsimStatus::Ok);
    assert_eq!(unsafe { CStr::from_ptr(label) }.to_str().unwrap(), "cfr0.1_r00.8_no_pc");
    let mut json = ptr::null_mut();
    assert_eq!(unsafe { prevsim_grid_condition_json(grid, 119, &mut json) }, PrevsimStatus::Ok);
    let v: serde_json::Value = serde_json::from_str(&take(json)).unwrap();
    assert_eq!(v["label"], "cfr5_r010_isolation");
    assert_eq!(
        unsafe { prevsim_grid_condition_json(grid, 120, &mut json) },
        PrevsimStatus::InvalidArgument
    );
    unsafe { prevsim_grid_free(grid) };
    unsafe { prevsim_grid_free(ptr::null_mut()) };

    let spec = CString::new(r#"{"cfr_percent":[1.5],"r0":[3.0],"tiers":["isolation"]}"#).unwrap();
    assert_eq!(unsafe { prevsim_grid_from_json(spec.as_ptr(), &mut grid) }, PrevsimStatus::Ok);
    assert_eq!(unsafe { prevsim_grid_len(grid, &mut n) }, PrevsimStatus::Ok);
    assert_eq!(n, 1);
    unsafe { prevsim_grid_free(grid) };
    let bad = CString::new("{").unwrap();
    assert_eq!(unsafe { prevsim_grid_from_json(bad.as_ptr(), &mut grid) }, PrevsimStatus::Parse);
    assert_eq!(unsafe { prevsim_grid_len(ptr::null(), &mut n) }, PrevsimStatus::NullPointer);
}

#[test]
fn relaxation_condition_json() {
    let mut json = ptr::null_mut();
    assert_eq!(unsafe { prevsim_policy_relaxation_json(&mut json) }, PrevsimStatus::Ok);
    let v: serde_json::Value = serde_json::from_str(&take(json)).unwrap();
    assert_eq!(v["context"]["r0"], 10.0);
    assert_eq!(v["measures"]["tier"], "no_pc");
}

#[test]
fn mock_simulation_is_deterministic() {
    let mut grid = ptr::null_mut();
    let mut cond = ptr::null_mut();
    unsafe {
        prevsim_grid_new_default(&mut grid);
        prevsim_grid_condition_json(grid, 7, &mut cond);
        prevsim_grid_free(grid);
    }
    let cond = CString::new(take(cond)).unwrap();
    let persona = prevsim::ingest::Persona {
        id: "p1".into(),
        virtual_name: "Li Wei".into(),
        age: 41,
        gender: "male".into(),
        education: "senior high".into(),
        occupation: "service worker".into(),
        community_id: "c01".into(),
        risk_t1: prevsim::ingest::RiskPerception::from_level(3, prevsim::ingest::Period::T1).unwrap(),
    };
    let persona = CString::new(serde_json::to_string(&persona).unwrap()).unwrap();
    let run = || {
        let mut sim = ptr::null_mut();
        assert_eq!(unsafe { prevsim_simulator_new_mock(4, 3, &mut sim) }, PrevsimStatus::Ok);
        let mut out = ptr::null_mut();
        let s = unsafe { prevsim_simulator_static_json(sim, persona.as_ptr(), cond.as_ptr(), 4, &mut out) };
        assert_eq!(s, PrevsimStatus::Ok, "{}", last_error());
        unsafe { prevsim_simulator_free(sim) };
        take(out)
    };
    let a = run();
    assert_eq!(a, run());
    let v: serde_json::Value = serde_json::from_str(&a).unwrap();
    assert_eq!(v["outcomes"].as_array().unwrap().len(), 11);
    assert_eq!(v["repetition_count"], 3);

    let mut sim = ptr::null_mut();
    assert_eq!(unsafe { prevsim_simulator_new_mock(4, 0, &mut sim) }, PrevsimStatus::InvalidArgument);
}

#[test]
fn header_compiles_as_c_and_cpp() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/prevsim.h");
    let dir = tempfile::tempdir().unwrap();
    for (compiler, ext) in [("cc", "c"), ("c++", "cpp")] {
        let src = dir.path().join(format!("use.{ext}"));
        std::fs::write(
            &src,
            format!(
                "#include \"{header}\"\nint main(void) {{ uint8_t v; return prevsim_discretize(0.5, 5, &v) == PREVSIM_STATUS_OK ? 0 : 1; }}\n"
            ),
        )
        .unwrap();
        let out = std::process::Command::new(compiler)
            .args(["-fsyntax-only", "-Wall", "-Werror"])
            .arg(&src)
            .output()
            .unwrap();
        assert!(out.status.success(), "{compiler}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

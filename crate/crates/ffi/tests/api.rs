use std::ffi::{CStr, CString};
use std::ptr;

use gridse_ffi::*;

const CASE14: &str = include_str!("../../core/tests/data/case14.m");

fn last_error() -> String {
    unsafe { CStr::from_ptr(gridse_last_error()) }.to_string_lossy().into_owned()
}

fn case14() -> *mut GridseCase {
    let text = CString::new(CASE14).unwrap();
    let mut case = ptr::null_mut();
    assert_eq!(unsafe { gridse_case_parse(text.as_ptr(), &mut case) }, GridseStatus::Ok);
    case
}

#[test]
fn estimate_through_handles() {
    unsafe {
        let case = case14();
        assert_eq!(gridse_case_n_buses(case), 14);
        let mut spec = gridse_noise_spec_default();
        spec.frac_pmu_perfect = 0.15;
        spec.frac_pmu_noisy = 0.15;
        spec.pmu_sigma_rel = 0.0;
        spec.rtu_sigma_vm_rel = 0.0;
        spec.rtu_sigma_pq_rel = 0.0;
        let mut se = ptr::null_mut();
        assert_eq!(gridse_secase_generate(case, &spec, 3, &mut se), GridseStatus::Ok);

        let (mut tr, mut ti) = (vec![0.0; 14], vec![0.0; 14]);
        assert_eq!(gridse_secase_truth(se, tr.as_mut_ptr(), ti.as_mut_ptr(), 14), GridseStatus::Ok);

        for nonlinear in [false, true] {
            let mut est = ptr::null_mut();
            let st = if nonlinear {
                gridse_estimate_nonlinear(se, 1e-8, 20, &mut est)
            } else {
                gridse_estimate_linear(se, &mut est)
            };
            assert_eq!(st, GridseStatus::Ok, "{}", last_error());
            let (mut vr, mut vi) = (vec![0.0; 14], vec![0.0; 14]);
            assert_eq!(gridse_estimate_voltages(est, vr.as_mut_ptr(), vi.as_mut_ptr(), 14), GridseStatus::Ok);
            for k in 0..14 {
                assert!((vr[k] - tr[k]).abs() < 1e-8 && (vi[k] - ti[k]).abs() < 1e-8);
            }
            assert!(gridse_estimate_objective(est) < 1e-16);
            assert_eq!(gridse_estimate_converged(est), 1);
            gridse_estimate_free(est);
        }
        gridse_secase_free(se);
        gridse_case_free(case);
    }
}

#[test]
fn power_flow_and_buffer_checks() {
    unsafe {
        let case = case14();
        let (mut vr, mut vi) = (vec![0.0; 14], vec![0.0; 14]);
        let mut it = 0usize;
        let st = gridse_power_flow(case, 1e-8, 50, vr.as_mut_ptr(), vi.as_mut_ptr(), 14, &mut it);
        assert_eq!(st, GridseStatus::Ok);
        assert!(it > 0 && (vr[0] - 1.06).abs() < 1e-12);
        let st = gridse_power_flow(case, 1e-8, 50, vr.as_mut_ptr(), vi.as_mut_ptr(), 13, ptr::null_mut());
        assert_eq!(st, GridseStatus::BufferTooSmall);
        assert!(last_error().contains("13"));
        let st = gridse_power_flow(case, 1e-8, 1, vr.as_mut_ptr(), vi.as_mut_ptr(), 14, ptr::null_mut());
        assert_eq!(st, GridseStatus::Numerical);
        gridse_case_free(case);
    }
}

#[test]
fn error_paths() {
    unsafe {
        let mut case = ptr::null_mut();
        assert_eq!(gridse_case_parse(ptr::null(), &mut case), GridseStatus::NullArgument);
        assert!(case.is_null());
        let bad = CString::new("mpc.baseMVA = 100;\nmpc.bus = [\n 1 3 0;\n];\n").unwrap();
        assert_eq!(gridse_case_parse(bad.as_ptr(), &mut case), GridseStatus::Parse);
        assert!(last_error().contains("line"));
        let missing = CString::new("/nonexistent/case.m").unwrap();
        assert_eq!(gridse_case_read(missing.as_ptr(), &mut case), GridseStatus::Io);
        assert!(!last_error().is_empty());
        assert_eq!(gridse_case_n_buses(ptr::null()), 0);
        assert!(gridse_estimate_objective(ptr::null()).is_nan());
        // freeing null is a no-op
        gridse_case_free(ptr::null_mut());
        gridse_mc_free(ptr::null_mut());
        let v = CStr::from_ptr(gridse_version()).to_str().unwrap();
        assert_eq!(v, env!("CARGO_PKG_VERSION"));
    }
}

#[test]
fn save_load_and_monte_carlo() {
    unsafe {
        let case = case14();
        let mut spec = gridse_noise_spec_default();
        spec.frac_pmu_perfect = 0.15;
        spec.frac_pmu_noisy = 0.15;
        let mut se = ptr::null_mut();
        assert_eq!(gridse_secase_generate(case, &spec, 5, &mut se), GridseStatus::Ok);
        let dir = tempfile::tempdir().unwrap();
        let path = CString::new(dir.path().join("se.json").to_str().unwrap()).unwrap();
        assert_eq!(gridse_secase_save(se, path.as_ptr()), GridseStatus::Ok);
        let mut back = ptr::null_mut();
        assert_eq!(gridse_secase_load(path.as_ptr(), &mut back), GridseStatus::Ok);
        assert_eq!(gridse_secase_n_buses(back), 14);

        let mut cfg = gridse_mc_config_default();
        cfg.samples = 300;
        cfg.pilot_samples = 100;
        cfg.seed = 9;
        let run = |threads: usize| {
            let mut c = cfg;
            c.threads = threads;
            let mut s = ptr::null_mut();
            assert_eq!(gridse_mc_run(back, &c, &mut s), GridseStatus::Ok, "{}", last_error());
            assert_eq!(gridse_mc_samples_completed(s), 300);
            let (mut m, mut d) = (vec![0.0; 14], vec![0.0; 14]);
            assert_eq!(gridse_mc_vm_stats(s, m.as_mut_ptr(), d.as_mut_ptr(), 14), GridseStatus::Ok);
            gridse_mc_free(s);
            (m, d)
        };
        assert_eq!(run(1), run(2));

        cfg.samples = 0;
        let mut s = ptr::null_mut();
        assert_eq!(gridse_mc_run(back, &cfg, &mut s), GridseStatus::InvalidArgument);

        gridse_secase_free(back);
        gridse_secase_free(se);
        gridse_case_free(case);
    }
}

use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use phasespace_ffi::*;

fn last_error() -> String {
    let n = unsafe { ps_last_error_message(ptr::null_mut(), 0) };
    let mut buf = vec![0; n + 1];
    unsafe { ps_last_error_message(buf.as_mut_ptr(), buf.len()) };
    unsafe { CStr::from_ptr(buf.as_ptr()) }.to_string_lossy().into_owned()
}

#[test]
fn oscillator_ground_state_through_handles() {
    unsafe {
        let mut grid = ptr::null_mut();
        assert_eq!(ps_grid_new(1, 128, 16.0, &mut grid), PsStatus::Ok);
        assert_eq!(ps_grid_len(grid), 128);

        let mut ham = ptr::null_mut();
        assert_eq!(ps_hamiltonian_oscillator(grid, 1.0, 1.0, 1.0, &mut ham), PsStatus::Ok);

        let mut wf = ptr::null_mut();
        let mut e = f64::NAN;
        assert_eq!(ps_solve_ground_state(ham, 0, 0.0, &mut wf, &mut e), PsStatus::Ok);
        assert!((e - 0.5).abs() < 1e-8, "{e}");

        let mut e2 = f64::NAN;
        assert_eq!(ps_energy(wf, ham, &mut e2), PsStatus::Ok);
        assert!((e - e2).abs() < 1e-10);

        let mut fx = vec![0.0; 128];
        let mut gk = vec![0.0; 128];
        assert_eq!(ps_wavefunction_marginals(wf, fx.as_mut_ptr(), gk.as_mut_ptr(), 128), PsStatus::Ok);
        let dx = 16.0 / 128.0;
        assert!((fx.iter().sum::<f64>() * dx - 1.0).abs() < 1e-10);

        let (a_lo, a_hi, b_lo, b_hi) = ([-0.4], [0.4], [-0.4], [0.4]);
        let (mut pa, mut pb) = (0.0, 0.0);
        let s = ps_concentration_boxes(wf, a_lo.as_ptr(), a_hi.as_ptr(), b_lo.as_ptr(), b_hi.as_ptr(), &mut pa, &mut pb);
        assert_eq!(s, PsStatus::Ok);
        let mut xs = vec![0.0; 128];
        let mut ks = vec![0.0; 128];
        ps_grid_axis(grid, 0, xs.as_mut_ptr(), 128);
        ps_grid_axis(grid, 1, ks.as_mut_ptr(), 128);
        let dk = ks[1] - ks[0];
        let cell_sum = |c: &[f64], w: &[f64], h: f64| -> f64 {
            c.iter().zip(w).filter(|(v, _)| v.abs() <= 0.4).map(|(_, w)| w).sum::<f64>() * h
        };
        assert!((pa - cell_sum(&xs, &fx, dx)).abs() < 1e-12, "{pa}");
        assert!((pb - cell_sum(&ks, &gk, dk)).abs() < 1e-12, "{pb}");

        ps_wavefunction_free(wf);
        ps_hamiltonian_free(ham);
        ps_grid_free(grid);
    }
}

#[test]
fn config_text_and_errors() {
    let toml = CString::new("[grid]\ndim = 1\npoints = 64\nlength = 12.0\n\n[hamiltonian]\nkind = \"separable\"\nkinetic = \"p^2/2\"\npotential = \"x^4\"\n").unwrap();
    unsafe {
        let (mut grid, mut ham) = (ptr::null_mut(), ptr::null_mut());
        assert_eq!(ps_hamiltonian_from_config(toml.as_ptr(), &mut grid, &mut ham), PsStatus::Ok);
        let mut wf = ptr::null_mut();
        assert_eq!(ps_wavefunction_gaussian(grid, [0.0].as_ptr(), ptr::null(), 1.0, &mut wf), PsStatus::Ok);
        let mut e = 0.0;
        assert_eq!(ps_energy(wf, ham, &mut e), PsStatus::Ok);
        // ⟨p²/2⟩ = 1/4 and ⟨x⁴⟩ = 3/4 for the standard Gaussian
        assert!((e - 1.0).abs() < 1e-10, "{e}");

        let raw = vec![1.0; 64];
        let mut bad = ptr::null_mut();
        assert_eq!(ps_wavefunction_from_samples(grid, raw.as_ptr(), ptr::null(), 64, 0, &mut bad), PsStatus::Ok);
        assert_eq!(ps_energy(bad, ham, &mut e), PsStatus::NotNormalized);
        assert!(last_error().contains("normalized"));
        ps_wavefunction_free(bad);

        let broken = CString::new("[grid]\ndim = 1\npoints = 64\nlength = 12.0\nbogus = 1\n").unwrap();
        let (mut g2, mut h2) = (ptr::null_mut(), ptr::null_mut());
        assert_eq!(ps_hamiltonian_from_config(broken.as_ptr(), &mut g2, &mut h2), PsStatus::InvalidArgument);
        assert!(last_error().contains("bogus"), "{}", last_error());
        assert!(g2.is_null() && h2.is_null());

        let mut small = [0.0; 4];
        assert_eq!(ps_grid_axis(grid, 0, small.as_mut_ptr(), 4), PsStatus::BufferTooSmall);
        assert_eq!(ps_grid_axis(grid, 9, small.as_mut_ptr(), 4), PsStatus::InvalidArgument);
        let msg = CStr::from_ptr(ps_status_string(PsStatus::NotConverged));
        assert_eq!(msg.to_str().unwrap(), "solver did not converge");

        ps_wavefunction_free(wf);
        ps_hamiltonian_free(ham);
        ps_grid_free(grid);
    }
}

#[test]
fn header_is_valid_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/phasespace.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for sym in ["ps_grid_new", "ps_solve_ground_state", "ps_last_error_message", "PS_STATUS_NOT_CONVERGED"] {
        assert!(text.contains(sym), "{sym} missing from header");
    }
    let Ok(status) = Command::new("cc")
        .args(["-std=c99", "-fsyntax-only", "-x", "c"])
        .arg(&header)
        .status()
    else {
        eprintln!("no C compiler; skipped syntax check");
        return;
    };
    assert!(status.success());
}

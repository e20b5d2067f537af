//! Exercises the C ABI exactly as a foreign caller would: through raw
//! pointers and status codes.

use std::ffi::{CStr, CString};
use std::ptr;

use pansharp_ffi::*;

fn last_error() -> String {
    let p = ps_last_error();
    assert!(!p.is_null(), "expected an error message");
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

/// A smooth 8x8x3 test cube as a planar buffer.
fn sample_data() -> (usize, usize, usize, Vec<f64>) {
    let (h, w, b) = (8usize, 8usize, 3usize);
    let mut data = Vec::with_capacity(h * w * b);
    for band in 0..b {
        for row in 0..h {
            for col in 0..w {
                let v = 100.0
                    + 30.0 * ((row as f64 * 0.7 + band as f64).sin())
                    + 20.0 * ((col as f64 * 0.5 - band as f64 * 0.3).cos())
                    + (row * w + col) as f64 * 0.01;
                data.push(v);
            }
        }
    }
    (h, w, b, data)
}

unsafe fn make_cube(h: usize, w: usize, b: usize, data: &[f64]) -> *mut PsCube {
    let mut cube: *mut PsCube = ptr::null_mut();
    let status = ps_cube_new(h, w, b, data.as_ptr(), &mut cube);
    assert_eq!(status, PsStatus::Ok);
    assert!(!cube.is_null());
    cube
}

#[test]
fn cube_round_trip_through_the_handle() {
    unsafe {
        let (h, w, b, data) = sample_data();
        let cube = make_cube(h, w, b, &data);
        assert_eq!(ps_cube_height(cube), h);
        assert_eq!(ps_cube_width(cube), w);
        assert_eq!(ps_cube_bands(cube), b);
        let mut out = vec![0.0; h * w * b];
        assert_eq!(
            ps_cube_copy_data(cube, out.as_mut_ptr(), out.len()),
            PsStatus::Ok
        );
        assert_eq!(out, data);
        ps_cube_free(cube);
    }
}

#[test]
fn null_and_bad_inputs_return_status_codes() {
    unsafe {
        let mut cube: *mut PsCube = ptr::null_mut();
        assert_eq!(
            ps_cube_new(2, 2, 1, ptr::null(), &mut cube),
            PsStatus::NullPointer
        );
        let nan = [f64::NAN; 4];
        assert_eq!(
            ps_cube_new(2, 2, 1, nan.as_ptr(), &mut cube),
            PsStatus::Data
        );
        assert!(last_error().contains("non-finite"));
        let path = CString::new("/no/such/file.raster").unwrap();
        assert_eq!(ps_cube_read(path.as_ptr(), &mut cube), PsStatus::Data);
        assert!(last_error().contains("missing-sidecar"));
        // wrong buffer length is a usage error
        let (h, w, b, data) = sample_data();
        let good = make_cube(h, w, b, &data);
        let mut small = [0.0; 3];
        assert_eq!(
            ps_cube_copy_data(good, small.as_mut_ptr(), small.len()),
            PsStatus::Usage
        );
        ps_cube_free(good);
        ps_cube_free(ptr::null_mut()); // no-op
    }
}

#[test]
fn synth_fuse_and_report_through_the_abi() {
    unsafe {
        let (h, w, b, data) = sample_data();
        let truth = make_cube(h, w, b, &data);
        let mut pan: *mut PsCube = ptr::null_mut();
        let mut ms: *mut PsCube = ptr::null_mut();
        assert_eq!(ps_synth_pair(truth, 2, &mut pan, &mut ms), PsStatus::Ok);
        assert_eq!(ps_cube_height(pan), h);
        assert_eq!(ps_cube_height(ms), h / 2);
        assert_eq!(ps_cube_bands(pan), 1);

        let mut gains = vec![0.0; b];
        assert_eq!(
            ps_estimate_response(pan, ms, true, gains.as_mut_ptr(), b),
            PsStatus::Ok
        );
        for g in &gains {
            assert!((g - 1.0 / b as f64).abs() <= 1e-8, "gain {g}");
        }

        let mut fused: *mut PsCube = ptr::null_mut();
        let mut report = PsMetricReport {
            consistent_rmse: -1.0,
            spatial_rmse: -1.0,
            spectral_rmse: -1.0,
            inverse_ability: 0.0,
            rmse: 0.0,
            has_rmse: true,
        };
        let status = ps_fuse(
            pan,
            ms,
            PsMethod::Gsa,
            true,
            PsUpsampler::Replicate,
            0.9,
            1.4,
            &mut fused,
            &mut report,
        );
        assert_eq!(status, PsStatus::Ok);
        assert_eq!(ps_cube_height(fused), h);
        assert_eq!(ps_cube_bands(fused), b);
        assert_eq!(report.consistent_rmse, 0.0);
        assert!(report.spatial_rmse <= 1e-8);
        assert!(report.spectral_rmse <= 1e-8);
        assert!((report.inverse_ability - 1.0).abs() <= 1e-8);
        assert!(!report.has_rmse);

        ps_cube_free(fused);
        ps_cube_free(pan);
        ps_cube_free(ms);
        ps_cube_free(truth);
    }
}

#[test]
fn ablation_grid_through_the_abi() {
    unsafe {
        let (h, w, b, data) = sample_data();
        let truth = make_cube(h, w, b, &data);
        let mut pan: *mut PsCube = ptr::null_mut();
        let mut ms: *mut PsCube = ptr::null_mut();
        assert_eq!(ps_synth_pair(truth, 2, &mut pan, &mut ms), PsStatus::Ok);
        let blank = PsAblationRow {
            method: PsMethod::Pcs,
            dse: false,
            metrics: PsMetricReport {
                consistent_rmse: 0.0,
                spatial_rmse: 0.0,
                spectral_rmse: 0.0,
                inverse_ability: 0.0,
                rmse: 0.0,
                has_rmse: false,
            },
        };
        let mut rows = [blank; PS_ABLATION_ROWS];
        let status = ps_ablate(
            pan,
            ms,
            truth,
            PsUpsampler::Replicate,
            0.9,
            1.4,
            rows.as_mut_ptr(),
            rows.len(),
        );
        assert_eq!(status, PsStatus::Ok);
        assert!(rows.iter().all(|r| r.metrics.has_rmse));
        for row in rows.iter().filter(|r| r.dse) {
            assert_eq!(row.metrics.consistent_rmse, 0.0);
        }
        // wrong row count is a usage error
        assert_eq!(
            ps_ablate(
                pan,
                ms,
                ptr::null(),
                PsUpsampler::Replicate,
                0.9,
                1.4,
                rows.as_mut_ptr(),
                3,
            ),
            PsStatus::Usage
        );
        ps_cube_free(pan);
        ps_cube_free(ms);
        ps_cube_free(truth);
    }
}

#[test]
fn degenerate_input_maps_to_numeric_status() {
    unsafe {
        let flat = vec![7.0; 8 * 8 * 2];
        let truth = make_cube(8, 8, 2, &flat);
        let mut pan: *mut PsCube = ptr::null_mut();
        let mut ms: *mut PsCube = ptr::null_mut();
        assert_eq!(ps_synth_pair(truth, 2, &mut pan, &mut ms), PsStatus::Ok);
        let status = ps_fuse(
            pan,
            ms,
            PsMethod::Gsa,
            false,
            PsUpsampler::Replicate,
            0.9,
            1.4,
            ptr::null_mut(),
            ptr::null_mut(),
        );
        assert_eq!(status, PsStatus::Numeric);
        assert!(last_error().contains("degenerate-variance"));
        ps_cube_free(pan);
        ps_cube_free(ms);
        ps_cube_free(truth);
    }
}

#[test]
fn write_and_read_through_the_abi() {
    unsafe {
        let dir = tempfile::tempdir().unwrap();
        let path = CString::new(dir.path().join("c.raster").to_str().unwrap()).unwrap();
        let dtype = CString::new("f64").unwrap();
        let (h, w, b, data) = sample_data();
        let cube = make_cube(h, w, b, &data);
        assert_eq!(
            ps_cube_write(cube, path.as_ptr(), dtype.as_ptr(), false),
            PsStatus::Ok
        );
        let mut back: *mut PsCube = ptr::null_mut();
        assert_eq!(ps_cube_read(path.as_ptr(), &mut back), PsStatus::Ok);
        let mut out = vec![0.0; h * w * b];
        assert_eq!(
            ps_cube_copy_data(back, out.as_mut_ptr(), out.len()),
            PsStatus::Ok
        );
        assert_eq!(out, data);
        ps_cube_free(back);
        ps_cube_free(cube);
    }
}

use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use flowdyn_ffi::*;

fn new_system(grid: bool) -> *mut FlowdynSystem {
    let mut sys = ptr::null_mut();
    let st = unsafe { flowdyn_system_new(1.0, 50, 8, 11, grid, 0.0, 0.0, 4.0, 2.0, &mut sys) };
    assert_eq!(st, FlowdynStatus::Ok);
    assert!(!sys.is_null());
    sys
}

fn last_error() -> String {
    let p = flowdyn_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn feed_bimodal(sys: *mut FlowdynSystem, x: f64, n: usize) {
    for i in 0..n {
        let theta = if i % 2 == 0 {
            0.03 * (i % 5) as f64
        } else {
            3.0 + 0.02 * (i % 3) as f64
        };
        let st =
            unsafe { flowdyn_system_observe(sys, i as f64 * 0.1, x, 0.5, 0.0, theta, 1.0 + 0.01 * (i % 7) as f64) };
        assert_eq!(st, FlowdynStatus::Ok);
    }
}

#[test]
fn observe_flush_query() {
    let sys = new_system(true);
    feed_bimodal(sys, 1.5, 200);
    let mut refits = 0usize;
    assert_eq!(
        unsafe { flowdyn_system_flush(sys, 20.0, &mut refits) },
        FlowdynStatus::Ok
    );
    assert_eq!(refits, 1);

    let (mut hash, mut bound) = (0usize, 0usize);
    assert_eq!(
        unsafe { flowdyn_system_cell_counts(sys, &mut hash, &mut bound) },
        FlowdynStatus::Ok
    );
    assert_eq!((hash, bound), (0, 1));

    let mut map = ptr::null_mut();
    assert_eq!(unsafe { flowdyn_system_map(sys, &mut map) }, FlowdynStatus::Ok);
    let mut k = 0usize;
    assert_eq!(
        unsafe { flowdyn_map_component_count(map, 1.5, 0.5, 0.0, &mut k) },
        FlowdynStatus::Ok
    );
    assert_eq!(k, 2);
    let mut masses = [0.0f64; 8];
    assert_eq!(
        unsafe { flowdyn_map_bin_masses(map, 1.5, 0.5, 0.0, 8, masses.as_mut_ptr()) },
        FlowdynStatus::Ok
    );
    assert!((masses.iter().sum::<f64>() - 1.0).abs() < 1e-6);
    // samples straddle theta = 0 and sit near pi
    assert!(masses[4] + masses[3] > 0.3 && masses[7] + masses[0] > 0.3);

    let mut d = 0.0;
    assert_eq!(
        unsafe { flowdyn_map_direction_density(map, 1.5, 0.5, 0.0, 0.05, &mut d) },
        FlowdynStatus::Ok
    );
    assert!(d > 1.0 / std::f64::consts::TAU);

    assert_eq!(
        unsafe { flowdyn_map_component_count(map, 3.5, 1.5, 0.0, &mut k) },
        FlowdynStatus::NotCovered
    );
    assert!(last_error().contains("no model"));
    unsafe {
        flowdyn_map_free(map);
        flowdyn_system_free(sys);
    }
}

#[test]
fn errors_are_reported() {
    let mut sys = ptr::null_mut();
    let st = unsafe { flowdyn_system_new(0.0, 50, 8, 1, false, 0.0, 0.0, 1.0, 1.0, &mut sys) };
    assert_eq!(st, FlowdynStatus::Config);
    assert!(sys.is_null());
    assert!(last_error().contains("resolution"));

    assert_eq!(
        unsafe { flowdyn_system_observe(ptr::null_mut(), 0.0, 0.0, 0.0, 0.0, 0.0, 1.0) },
        FlowdynStatus::NullPointer
    );

    let sys = new_system(false);
    assert_eq!(
        unsafe { flowdyn_system_observe(sys, 0.0, 0.5, 0.5, 0.0, 0.0, -1.0) },
        FlowdynStatus::InvalidArgument
    );
    assert_eq!(
        unsafe { flowdyn_system_remove_node(sys, 0.0, 42) },
        FlowdynStatus::InvalidArgument
    );
    assert_eq!(
        unsafe { flowdyn_system_set_method(sys, 9) },
        FlowdynStatus::InvalidArgument
    );
    assert_eq!(
        unsafe { flowdyn_system_observe(sys, 0.0, 0.5, 0.5, 0.0, 0.0, 1.0) },
        FlowdynStatus::Ok
    );
    assert!(flowdyn_last_error_message().is_null());

    let missing = CString::new("/nonexistent/dir/snap.json").unwrap();
    let mut map = ptr::null_mut();
    assert_eq!(
        unsafe { flowdyn_map_load(missing.as_ptr(), &mut map) },
        FlowdynStatus::Io
    );
    assert!(map.is_null());

    let name = unsafe { CStr::from_ptr(flowdyn_status_name(FlowdynStatus::NotCovered)) };
    assert_eq!(name.to_str().unwrap(), "not-covered");
    unsafe { flowdyn_system_free(sys) };
}

#[test]
fn pose_events_bind_move_and_revert() {
    let sys = new_system(false);
    feed_bimodal(sys, 0.5, 40);
    let (mut hash, mut bound) = (0usize, 0usize);
    unsafe {
        assert_eq!(flowdyn_system_add_node(sys, 5.0, 7, 0.5, 0.5, 0.0), FlowdynStatus::Ok);
        // still inside the stabilization window
        assert_eq!(flowdyn_system_tick(sys, 10.0, ptr::null_mut()), FlowdynStatus::Ok);
        flowdyn_system_cell_counts(sys, &mut hash, &mut bound);
        assert_eq!((hash, bound), (1, 0));

        assert_eq!(flowdyn_system_tick(sys, 15.0, ptr::null_mut()), FlowdynStatus::Ok);
        flowdyn_system_cell_counts(sys, &mut hash, &mut bound);
        assert_eq!((hash, bound), (0, 1));

        assert_eq!(flowdyn_system_move_node(sys, 16.0, 7, 2.5, 0.5, 0.0), FlowdynStatus::Ok);
        assert_eq!(flowdyn_system_remove_node(sys, 17.0, 7), FlowdynStatus::Ok);
        flowdyn_system_cell_counts(sys, &mut hash, &mut bound);
        assert_eq!((hash, bound), (1, 0));
        let mut seen = 0u64;
        flowdyn_system_total_seen(sys, &mut seen);
        assert_eq!(seen, 40);
        flowdyn_system_free(sys);
    }
}

#[test]
fn snapshot_round_trip_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("snap.json");
    let cpath = CString::new(path.to_str().unwrap()).unwrap();
    let sys = new_system(true);
    feed_bimodal(sys, 1.5, 120);
    unsafe {
        assert_eq!(flowdyn_system_set_method(sys, 1), FlowdynStatus::Ok);
        assert_eq!(flowdyn_system_flush(sys, 12.0, ptr::null_mut()), FlowdynStatus::Ok);
        assert_eq!(flowdyn_system_save_snapshot(sys, cpath.as_ptr()), FlowdynStatus::Ok);
    }
    let mut live = ptr::null_mut();
    let mut loaded = ptr::null_mut();
    unsafe {
        assert_eq!(flowdyn_system_map(sys, &mut live), FlowdynStatus::Ok);
        assert_eq!(flowdyn_map_load(cpath.as_ptr(), &mut loaded), FlowdynStatus::Ok);
    }
    let mut a = [0.0f64; 8];
    let mut b = [0.0f64; 8];
    unsafe {
        flowdyn_map_bin_masses(live, 1.5, 0.5, 0.0, 8, a.as_mut_ptr());
        flowdyn_map_bin_masses(loaded, 1.5, 0.5, 0.0, 8, b.as_mut_ptr());
    }
    assert_eq!(a, b);
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.contains("\"method\": \"meanshift\""));
    unsafe {
        flowdyn_map_free(live);
        flowdyn_map_free(loaded);
        flowdyn_system_free(sys);
    }
}

/// target/<profile>, found from this test binary's location.
fn profile_dir() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    exe.parent().and_then(Path::parent).unwrap().to_path_buf()
}

#[test]
fn c_program_links_against_header() {
    let Some(cc) = ["cc", "gcc", "clang"]
        .into_iter()
        .find(|c| Command::new(c).arg("--version").output().is_ok())
    else {
        eprintln!("no C compiler on PATH; skipping");
        return;
    };
    let lib = profile_dir().join("libflowdyn_ffi.a");
    assert!(lib.exists(), "static library not found at {}", lib.display());
    let manifest = Path::new(env!("CARGO_MANIFEST_DIR"));
    let dir = tempfile::tempdir().unwrap();
    let exe = dir.path().join("smoke");
    let out = Command::new(cc)
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(manifest.join("tests/c/smoke.c"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm"])
        .arg("-o")
        .arg(&exe)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "compile failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let run = Command::new(&exe).output().unwrap();
    assert!(
        run.status.success(),
        "smoke program failed: {}",
        String::from_utf8_lossy(&run.stderr)
    );
    assert_eq!(String::from_utf8_lossy(&run.stdout).trim(), "ok");
}

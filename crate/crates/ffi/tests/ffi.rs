use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use tide_ffi::*;

fn sample(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/samples").join(name)
}

fn open(name: &str) -> *mut TideRunLog {
    let path = CString::new(sample(name).to_str().unwrap()).unwrap();
    let mut log = ptr::null_mut();
    let status = unsafe { tide_run_log_open(path.as_ptr(), &mut log) };
    assert_eq!(status, TideStatus::Ok, "{}", last_error());
    assert!(!log.is_null());
    log
}

fn last_error() -> String {
    let p = tide_last_error_message();
    if p.is_null() {
        String::new()
    } else {
        unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
    }
}

#[test]
fn auv_through_handles() {
    let log = open("sample.jsonl");
    let (mut n, mut t_max) = (0usize, 0usize);
    let (mut auv, mut sr) = (0.0, 0.0);
    unsafe {
        assert_eq!(tide_run_log_trajectory_count(log, &mut n), TideStatus::Ok);
        assert_eq!(tide_run_log_t_max(log, &mut t_max), TideStatus::Ok);
        assert_eq!(tide_auv(log, 0, &mut auv, &mut sr), TideStatus::Ok);
        tide_run_log_free(log);
    }
    assert_eq!((n, t_max), (4, 4));
    assert_eq!((auv, sr), (0.53125, 0.75));
    assert!(tide_last_error_message().is_null());
}

#[test]
fn bootstrap_and_loop_ratio() {
    let log = open("sample.jsonl");
    let (mut lo, mut hi, mut lr) = (0.0, 0.0, 0.0);
    unsafe {
        assert_eq!(
            tide_auv_bootstrap(log, 4, 0.9, 500, 1, &mut lo, &mut hi),
            TideStatus::Ok
        );
        assert_eq!(tide_loop_ratio(log, 0.0, &mut lr), TideStatus::Ok);
        // text states cannot be compared by cosine
        assert_eq!(tide_loop_ratio(log, 0.99, &mut lr), TideStatus::Computation);
        assert!(last_error().contains("vector"));
        assert_eq!(
            tide_auv_bootstrap(log, 4, 0.9, 5, 1, &mut lo, &mut hi),
            TideStatus::InvalidArgument
        );
        tide_run_log_free(log);
    }
    assert!(lo <= hi);
    assert_eq!(lr, 2.0 / 9.0);
}

#[test]
fn memory_index_and_alignment() {
    let with = open("alpha-blocksworld-full.jsonl");
    let without = open("alpha-blocksworld-none.jsonl");
    let (mut same, mut mi, mut back) = (1.0, 0.0, 0.0);
    unsafe {
        assert_eq!(tide_memory_index(with, with, 0, 0, &mut same), TideStatus::Ok);
        assert_eq!(tide_memory_index(with, without, 0, 0, &mut mi), TideStatus::Ok);
        assert_eq!(tide_memory_index(without, with, 1, 0, &mut back), TideStatus::Ok);
        tide_run_log_free(with);
        tide_run_log_free(without);
    }
    assert_eq!(same, 0.0);
    assert_eq!(mi, -back);
    assert!(mi > 0.0);
}

#[test]
fn errors_are_reported() {
    let mut log = ptr::null_mut();
    let missing = CString::new("/nonexistent/run.jsonl").unwrap();
    unsafe {
        assert_eq!(tide_run_log_open(ptr::null(), &mut log), TideStatus::NullPointer);
        assert_eq!(tide_run_log_open(missing.as_ptr(), &mut log), TideStatus::Io);
        assert!(last_error().contains("/nonexistent/run.jsonl"));

        let bad = b"{\"type\":\"run\"}\n";
        assert_eq!(tide_run_log_parse(bad.as_ptr(), bad.len(), &mut log), TideStatus::Parse);
        assert!(last_error().contains("line 1"), "{}", last_error());
        assert!(log.is_null());

        let mut out = 0.0;
        assert_eq!(tide_loop_ratio(ptr::null(), 0.0, &mut out), TideStatus::NullPointer);
        let mut n = 0usize;
        assert_eq!(tide_run_log_t_max(ptr::null(), &mut n), TideStatus::NullPointer);
        tide_run_log_free(ptr::null_mut());
    }
}

#[test]
fn version_string() {
    let v = unsafe { CStr::from_ptr(tide_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_every_entry_point() {
    let header = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("include/tide.h")).unwrap();
    for name in [
        "tide_run_log_open",
        "tide_run_log_parse",
        "tide_run_log_free",
        "tide_run_log_trajectory_count",
        "tide_run_log_t_max",
        "tide_auv",
        "tide_auv_bootstrap",
        "tide_loop_ratio",
        "tide_memory_index",
        "tide_last_error_message",
        "tide_version",
        "typedef struct TideRunLog TideRunLog",
        "TIDE_STATUS_OK = 0",
    ] {
        assert!(header.contains(name), "{name}");
    }
}

#[test]
fn c_program_links_against_static_library() {
    let target_dir = std::env::current_exe()
        .unwrap()
        .parent()
        .unwrap()
        .parent()
        .unwrap()
        .to_path_buf();
    let lib = target_dir.join("libtide_ffi.a");
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    if !lib.is_file() || Command::new(&cc).arg("--version").output().is_err() {
        eprintln!("skipping: no C compiler or static library");
        return;
    }
    let dir = Path::new(env!("CARGO_MANIFEST_DIR"));
    let exe = std::env::temp_dir().join(format!("tide_smoke_{}", std::process::id()));
    let build = Command::new(&cc)
        .arg(dir.join("tests/smoke.c"))
        .arg("-I")
        .arg(dir.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .output()
        .unwrap();
    assert!(build.status.success(), "{}", String::from_utf8_lossy(&build.stderr));
    let run = Command::new(&exe).output().unwrap();
    let _ = std::fs::remove_file(&exe);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    assert_eq!(
        String::from_utf8_lossy(&run.stdout),
        format!("{} 0.87500 1.00\n", env!("CARGO_PKG_VERSION"))
    );
}

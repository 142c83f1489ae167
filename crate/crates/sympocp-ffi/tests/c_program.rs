//! Compiles and runs a small C program against the generated header and the
//! static library.

use std::path::PathBuf;
use std::process::Command;

const PROGRAM: &str = r#"
#include <stdio.h>
#include <math.h>
#include "sympocp.h"

int main(void) {
    SympProblem *p = NULL;
    if (symp_problem_from_catalog("free", &p) != SYMP_OK) return 10;
    SympMethod m = { SYMP_METHOD_GF2_EULER, 1, 0.5, 0.0, 0 };
    SympTrajectory *tr = NULL;
    if (symp_integrate(p, &m, NULL, NULL, 0.5, 4, &tr) != SYMP_OK) return 11;
    double q = 0.0;
    if (symp_trajectory_sample(tr, 4, NULL, &q, NULL, NULL, NULL) != SYMP_OK) return 12;
    if (q != 8.0) return 13;
    if (symp_problem_from_catalog("nope", &p) != SYMP_ERR_INVALID) return 14;
    if (symp_last_error() == NULL) return 15;
    symp_trajectory_free(tr);
    symp_problem_free(p);
    printf("ok\n");
    return 0;
}
"#;

fn target_dir() -> PathBuf {
    // tests run from target/<profile>/deps
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

#[test]
fn c_program_links_and_runs() {
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let lib = target_dir().join("libsympocp_ffi.a");
    assert!(lib.exists(), "static library missing at {}", lib.display());
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    let exe = dir.path().join("main");
    std::fs::write(&src, PROGRAM).unwrap();
    let status = Command::new("cc")
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .expect("a C compiler (cc) is required for this test");
    assert!(status.success());
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "exit {:?}", out.status.code());
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "ok");
}

//! Builds a small C program against the generated header and the static
//! library, then runs it.

use std::path::{Path, PathBuf};
use std::process::Command;

const PROGRAM: &str = r#"
#include <stdio.h>
#include "mdcl.h"

int main(void) {
    double probs[4] = {0.9, 0.1, 0.55, 0.45};
    double margins[2];
    if (mdcl_bvsb(probs, 2, 2, margins) != MDCL_STATUS_OK) return 1;
    double acc[2] = {0.6, 0.8}, area = 0.0;
    if (mdcl_aulc(acc, 2, &area) != MDCL_STATUS_OK) return 2;
    if (mdcl_aulc(NULL, 0, &area) != MDCL_STATUS_INVALID_ARGUMENT) return 3;
    if (mdcl_last_error() == NULL) return 4;

    MdclDataset *ds = NULL;
    const char *cfg = "{\"synthetic\": {\"num_domains\": 2, \"dim\": 4, \"per_domain_n\": 40}}";
    if (mdcl_dataset_new(cfg, 7, &ds) != MDCL_STATUS_OK) return 5;
    size_t k = 0, c = 0, d = 0;
    mdcl_dataset_shape(ds, &k, &c, &d);
    mdcl_dataset_free(ds);
    printf("%.2f %.2f %.2f %zu %zu %zu\n", margins[0], margins[1], area, k, c, d);
    return 0;
}
"#;

/// `target/<profile>`, found from this test binary's location.
fn profile_dir() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    exe.parent().and_then(Path::parent).unwrap().to_path_buf()
}

#[test]
fn c_program_links_and_runs() {
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    assert!(
        include.join("mdcl.h").is_file(),
        "header is generated by the build script"
    );
    let lib = profile_dir().join("libmdcl_ffi.a");
    assert!(lib.is_file(), "static library at {}", lib.display());

    let tmp = tempfile::tempdir().unwrap();
    let src = tmp.path().join("main.c");
    let bin = tmp.path().join("main");
    std::fs::write(&src, PROGRAM).unwrap();
    let status = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-o"])
        .arg(&bin)
        .arg(&src)
        .arg("-I")
        .arg(&include)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm"])
        .status()
        .expect("C compiler available");
    assert!(status.success());
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "exit {:?}", out.status.code());
    assert_eq!(String::from_utf8_lossy(&out.stdout), "0.80 0.10 70.00 2 2 4\n");
}

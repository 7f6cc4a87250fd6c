use std::path::Path;

// Reference LAPACK/BLAS archives as installed by Debian's alternatives system.
// The default `liblapack.so` may resolve to an optimized build whose kernels
// are selected by CPU detection at load time.
const REFERENCE_DIRS: [&str; 2] = [
    "/usr/lib/x86_64-linux-gnu/lapack",
    "/usr/lib/x86_64-linux-gnu/blas",
];

fn main() {
    println!("cargo:rerun-if-env-changed=THERMOCLUST_LAPACK_DYLIB");
    let reference = REFERENCE_DIRS.iter().all(|d| Path::new(d).is_dir());
    if reference && std::env::var_os("THERMOCLUST_LAPACK_DYLIB").is_none() {
        for d in REFERENCE_DIRS {
            println!("cargo:rustc-link-search=native={d}");
        }
        println!("cargo:rustc-link-lib=static=lapack");
        println!("cargo:rustc-link-lib=static=blas");
        println!("cargo:rustc-link-lib=dylib=gfortran");
    } else {
        println!("cargo:rustc-link-lib=lapack");
        println!("cargo:rustc-link-lib=blas");
    }
}

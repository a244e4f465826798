use std::env;
use std::path::PathBuf;

fn main() {
    let dir = PathBuf::from(env::var("CARGO_MANIFEST_DIR").unwrap());
    println!("cargo:rerun-if-changed=src/lib.rs");
    let config = cbindgen::Config {
        language: cbindgen::Language::C,
        include_guard: Some("DECOYQKD_H".into()),
        no_includes: true,
        sys_includes: vec!["stddef.h".into(), "stdint.h".into()],
        usize_is_size_t: true,
        ..Default::default()
    };
    match cbindgen::Builder::new().with_crate(&dir).with_config(config).generate() {
        Ok(h) => {
            h.write_to_file(dir.join("include").join("decoyqkd.h"));
        }
        Err(e) => println!("cargo:warning=header not regenerated: {e}"),
    }
}

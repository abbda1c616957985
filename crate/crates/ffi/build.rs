fn main() {
    let crate_dir = std::env::var("CARGO_MANIFEST_DIR").unwrap();
    let mut config = cbindgen::Config::default();
    config.language = cbindgen::Language::C;
    config.include_guard = Some("HMDP_H".into());
    config.cpp_compat = true;
    config.documentation = true;
    // C enum constants share one namespace; qualify them with the type name.
    config.enumeration.prefix_with_name = true;
    config.header =
        Some("/* C interface to the hmdp solver library. Generated; do not edit. */".into());
    cbindgen::Builder::new()
        .with_crate(&crate_dir)
        .with_config(config)
        .generate()
        .expect("header generation")
        .write_to_file(format!("{crate_dir}/include/hmdp.h"));
    println!("cargo:rerun-if-changed=src/lib.rs");
}

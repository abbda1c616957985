//! Golden-file checks on the canonical model serialization.
//!
//! The canonical JSON is the identity of a model: manifests hash it, and
//! reproduction depends on every byte of it being stable across releases.
//! Run with UPDATE_GOLDEN=1 to re-bless after an intentional format change.

use std::path::PathBuf;

use hmdp::model::ModelConfig;

fn golden_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

#[test]
fn canonical_model_json_is_stable() {
    let dir = golden_dir();
    let config = ModelConfig::from_path(&dir.join("desk_model.toml")).unwrap();
    let model = config.build().unwrap();
    let mut rendered = serde_json::to_string_pretty(&model.canonical_json()).unwrap();
    rendered.push('\n');

    let golden_path = dir.join("desk_model.json");
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&golden_path, &rendered).unwrap();
        return;
    }
    let expected = std::fs::read_to_string(&golden_path).unwrap();
    assert_eq!(
        rendered, expected,
        "canonical model JSON drifted from tests/golden/desk_model.json; \
         if the change is intentional, re-bless with UPDATE_GOLDEN=1"
    );
}

#[test]
fn content_hash_is_stable() {
    let dir = golden_dir();
    let config = ModelConfig::from_path(&dir.join("desk_model.toml")).unwrap();
    let model = config.build().unwrap();
    assert_eq!(
        model.content_hash(),
        "e4b525475e7b2c7ae5a4e706325553c6c12f7e216cc37072a379144a80b275b0"
    );
}

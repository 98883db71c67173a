use std::path::PathBuf;

use serde::de::DeserializeOwned;
use serde::Serialize;

/// Loads `tests/fixtures/<name>`. With `ZDMIX_BLESS=1` the fixture is first
/// rewritten from `current`.
pub fn fixture<T: Serialize + DeserializeOwned>(name: &str, current: &T) -> T {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name);
    if std::env::var("ZDMIX_BLESS").is_ok_and(|v| v == "1") {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, serde_json::to_string_pretty(current).unwrap() + "\n").unwrap();
    }
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    serde_json::from_str(&text).unwrap()
}

//! Regenerates the committed `configs/ex*.toml` files from the builtin
//! example definitions, so the files and `RunConfig::example` can never
//! drift apart (a unit test asserts byte equality).

use memfpk::config::{RunConfig, Scale};

fn main() {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs");
    std::fs::create_dir_all(dir).expect("create configs dir");
    for id in ["ex1", "ex2", "ex3", "ex4"] {
        let cfg = RunConfig::example(id, Scale::Desk).expect("builtin example");
        let path = format!("{dir}/{id}.toml");
        std::fs::write(&path, cfg.to_toml()).expect("write config");
        println!("wrote {path}");
    }
}

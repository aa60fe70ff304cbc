#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ctcfuse::io::{save_emissions, Manifest, ManifestEntry};
use ctcfuse::synth::disambiguation_toy;
use ctcfuse::TrainInstance;

pub fn ctcfuse<I, S>(args: I) -> Output
where
    I: IntoIterator<Item = S>,
    S: AsRef<std::ffi::OsStr>,
{
    Command::new(env!("CARGO_BIN_EXE_ctcfuse"))
        .args(args)
        .env("CTCFUSE_LOG", "error")
        .output()
        .expect("spawn ctcfuse")
}

pub fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

pub fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// `ctcfuse gen` into `dir`.
pub fn gen(dir: &Path, count: usize, extra: &[&str]) {
    let count = count.to_string();
    let mut args = vec!["gen", "--count", &count, "--out", p(dir)];
    args.extend_from_slice(extra);
    ok(&ctcfuse(args));
}

pub struct ToyFiles {
    pub vocab: PathBuf,
    pub lm: PathBuf,
    pub train: PathBuf,
    pub heldout: PathBuf,
}

fn write_manifest(dir: &Path, name: &str, instances: &[TrainInstance], vocab: &ctcfuse::Vocabulary) -> PathBuf {
    let sub = dir.join(name);
    std::fs::create_dir_all(&sub).unwrap();
    let mut manifest = Manifest::default();
    for (i, inst) in instances.iter().enumerate() {
        let file = format!("{name}/{i:03}.ctce");
        save_emissions(dir.join(&file), &inst.emissions).unwrap();
        manifest.entries.push(ManifestEntry {
            emissions: file.into(),
            reference: vocab.render(&inst.reference),
        });
    }
    let path = dir.join(format!("{name}.tsv"));
    std::fs::write(&path, manifest.to_text()).unwrap();
    path
}

/// The constructed disambiguation task written out as CLI inputs.
pub fn write_toy(dir: &Path) -> ToyFiles {
    let toy = disambiguation_toy(8, 6, 11).unwrap();
    let vocab = dir.join("vocab.txt");
    toy.vocab.save(&vocab).unwrap();
    let lm = dir.join("lm.arpa");
    std::fs::write(&lm, toy.lm.to_arpa()).unwrap();
    ToyFiles {
        vocab,
        lm,
        train: write_manifest(dir, "train", &toy.train, &toy.vocab),
        heldout: write_manifest(dir, "heldout", &toy.heldout, &toy.vocab),
    }
}

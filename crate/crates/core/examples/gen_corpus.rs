//! Writes seeded random corpora.
//!
//! `gen_corpus DIR` writes train/dev/test splits; `gen_corpus FILE SEED N TURNS`
//! writes a single corpus.
use convgraph::fixtures::random_corpus;

fn main() -> convgraph::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if let [file, seed, n, turns] = &args[..] {
        let parse = |s: &String| s.parse::<usize>().expect("numeric argument");
        return random_corpus(parse(seed) as u64, parse(n), parse(turns)).save(file);
    }
    let dir = std::path::PathBuf::from(args.first().map_or(".", String::as_str));
    for (name, seed, n) in [("train", 1, 120), ("dev", 2, 30), ("test", 3, 30)] {
        random_corpus(seed, n, 8).save(dir.join(format!("{name}.jsonl")))?;
    }
    Ok(())
}

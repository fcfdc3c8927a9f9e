//! The full command-line workflow driven programmatically: write a config,
//! train the source checkpoint, reprogram, evaluate, and diagnose, all
//! through the same entry point the `reprogram` binary uses.
//!
//! ```bash
//! cargo run --example cli_workflow
//! ```

use reprogram::cli::run_cli;

fn run(args: &[&str]) {
    let argv: Vec<String> = args.iter().map(|s| s.to_string()).collect();
    println!("$ {}", args.join(" "));
    let code = run_cli(&argv);
    assert_eq!(code, 0, "command failed with exit code {code}");
    println!();
}

fn main() -> reprogram::Result<()> {
    let dir = std::env::temp_dir().join("reprogram_example_cli");
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir)?;
    let config_path = dir.join("run.json");

    // The one-to-one variant so that diagnose accepts the mapping.
    let config = serde_json::json!({
        "checkpoint": dir.join("source.ckpt"),
        "report_dir": dir.join("report"),
        "data": {
            "source": {"synthetic": {"seed": 7}},
            "target": {"synthetic": {"seed": 7, "variant": "one_to_one"}}
        },
        "source_train": {"epochs": 30, "seed": 7},
        "reprogram": {
            "epochs": 40,
            "seed": 0,
            "output_map": {"greedy_mapping": {"labels_per_target": 1}}
        }
    });
    std::fs::write(&config_path, serde_json::to_string_pretty(&config)?)?;
    println!("config written to {}\n", config_path.display());

    let cfg = config_path.to_str().unwrap();
    run(&["reprogram", "train-source", "--config", cfg]);
    run(&["reprogram", "reprogram", "--config", cfg]);
    run(&["reprogram", "evaluate", "--config", cfg]);
    run(&["reprogram", "diagnose", "--config", cfg]);

    println!("report directory:");
    let mut entries: Vec<_> = std::fs::read_dir(dir.join("report"))?
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    entries.sort();
    for e in entries {
        println!("  {e}");
    }
    Ok(())
}

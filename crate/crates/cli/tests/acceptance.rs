mod common;

use std::net::TcpListener;
use std::path::Path;
use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};

use common::{executions_line, fixtures, gqa, Workspace};
use pcomp_core::compression::QuestionTypeCatalog;
use pcomp_core::eval::{confusion_matrix, reduction_rate, round1};
use pcomp_core::inference::{normalize_type_reply, resolve_type};
use pcomp_core::preprompt::{parse_api_definitions, Aggregator, SnippetBundle, SnippetRecord, TokenBudget};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn runner(cases: u32) -> TestRunner {
    TestRunner::new_with_rng(
        Config { cases, failure_persistence: None, ..Config::default() },
        proptest::test_runner::TestRng::deterministic_rng(proptest::test_runner::RngAlgorithm::ChaCha),
    )
}

fn reduction_arithmetic() -> Outcome {
    let total = reduction_rate(3434.0, 993.0).map_err(|e| e.to_string())?;
    let defs = reduction_rate(1971.0, 541.0).map_err(|e| e.to_string())?;
    ensure((total - 71.1).abs() <= 0.05, || format!("total reduction {total}"))?;
    ensure((defs - 72.6).abs() <= 0.05, || format!("definitions reduction {defs}"))?;
    Ok(format!("{total:.1}% and {defs:.1}%"))
}

fn budget_identity() -> Outcome {
    let b = TokenBudget::adaptive(541, 77, 141, 234, 0);
    ensure(b.total == 993, || format!("fixture total {}", b.total))?;
    let strategy = (0usize..5000, 0usize..500, 0usize..500, 0usize..3000, 0usize..200);
    runner(100)
        .run(&strategy, |(d, i, c, s, q)| {
            let b = TokenBudget::adaptive(d, i, c, s, q);
            prop_assert_eq!(b.total, d + i + c + s + 2 * q);
            prop_assert!(b.is_consistent());
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok("993 and 100 random vectors".into())
}

fn definitions(functions: &[(String, usize)], classes: &[(String, Vec<String>)]) -> String {
    let mut out = String::new();
    for (name, body) in functions {
        out.push_str(&format!("def {name}(x):\n    \"\"\"Doc for {name}.\"\"\"\n"));
        for k in 0..*body {
            out.push_str(&format!("    v{k} = x + {k}\n"));
        }
        out.push_str("    return x\n\n\n");
    }
    for (name, methods) in classes {
        out.push_str(&format!("class {name}:\n    \"\"\"A class.\"\"\"\n\n"));
        for m in methods {
            out.push_str(&format!("    def {m}(self, a):\n        return a\n\n"));
        }
        out.push('\n');
    }
    out
}

fn aggregation_properties() -> Outcome {
    let strategy = (
        prop::collection::vec(0usize..4, 1..5),
        prop::collection::vec(1usize..4, 0..3),
        prop::collection::vec(prop::collection::vec(any::<prop::sample::Index>(), 0..4), 0..6),
    );
    runner(200)
        .run(&strategy, |(fn_bodies, class_sizes, picks)| {
            let functions: Vec<(String, usize)> =
                fn_bodies.iter().enumerate().map(|(i, b)| (format!("fn_{i}"), *b)).collect();
            let classes: Vec<(String, Vec<String>)> = class_sizes
                .iter()
                .enumerate()
                .map(|(i, n)| (format!("Cls{i}"), (0..*n).map(|m| format!("meth_{i}_{m}")).collect()))
                .collect();
            let source = definitions(&functions, &classes);
            let index = parse_api_definitions(&source).unwrap();
            let names: Vec<String> = functions
                .iter()
                .map(|(n, _)| n.clone())
                .chain(classes.iter().flat_map(|(_, m)| m.clone()))
                .collect();
            let records: Vec<SnippetRecord> = picks
                .iter()
                .enumerate()
                .map(|(i, p)| {
                    let mut code = String::from("def execute_command(image):\n");
                    for ix in p {
                        code.push_str(&format!("    {}(image)\n", names[ix.index(names.len())]));
                    }
                    code.push_str("    return image");
                    SnippetRecord { id: format!("s{i}"), code }
                })
                .collect();
            let bundle = SnippetBundle::from_records(records.clone(), &index).unwrap();
            let instruction = "Write a function.\n\nQuery: ";
            let agg = Aggregator::default().aggregate_detailed(&index, instruction, &bundle);
            for (r, p) in records.iter().zip(&picks) {
                let hits: Vec<_> = agg.insertions.iter().filter(|i| i.snippet_id == r.id).collect();
                prop_assert_eq!(hits.len(), 1);
                let want = p.first().map(|ix| index.callable(&names[ix.index(names.len())]).unwrap().0);
                prop_assert_eq!(hits[0].block, want);
                if let Some(b) = want {
                    let before = &agg.text[..hits[0].range.start];
                    let block_text = index.block_text(&index.blocks()[b]);
                    let group_start = agg
                        .insertions
                        .iter()
                        .filter(|i| i.block == Some(b))
                        .map(|i| i.range.start)
                        .min()
                        .unwrap();
                    prop_assert!(agg.text[..group_start].ends_with(block_text));
                    prop_assert!(before.len() >= group_start);
                }
            }
            prop_assert_eq!(agg.strip(), source);
            prop_assert!(agg.text.ends_with(instruction));
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok("200 generated fixtures".into())
}

fn snapshot(ws: &Workspace, outputs: &[String]) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(ws.path("out"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files.extend(outputs.iter().enumerate().map(|(i, o)| (format!("stdout{i}"), o.as_bytes().to_vec())));
    files
}

fn determinism() -> Outcome {
    let listener = TcpListener::bind("127.0.0.1:0").map_err(|e| e.to_string())?;
    listener.set_nonblocking(true).map_err(|e| e.to_string())?;
    let backend = format!(
        "[backend]\ndialect = \"chat_completions\"\nbase_url = \"http://{}\"\nmodel = \"m\"\napi_key_env = \"PCOMP_ACCEPTANCE_KEY\"\n",
        listener.local_addr().unwrap()
    );
    let batch = gqa("dataset.jsonl").display().to_string();
    let mut runs = Vec::new();
    for _ in 0..3 {
        let ws = Workspace::with_sections("replay.jsonl", &executions_line(""), &backend);
        let mut outputs = Vec::new();
        for args in [
            vec!["compress"],
            vec!["classify", "--batch", &batch],
            vec!["infer"],
            vec!["eval"],
        ] {
            let (r, out) = ws.run(&args);
            r.map_err(|e| format!("{}: {e}", args[0]))?;
            outputs.push(out);
        }
        runs.push(snapshot(&ws, &outputs));
    }
    ensure(runs[0] == runs[1] && runs[1] == runs[2], || "outputs differ between runs".into())?;
    match listener.accept() {
        Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {}
        _ => return Err("a network connection was attempted".into()),
    }
    Ok(format!("{} files identical across 3 runs, no connections", runs[0].len()))
}

fn classification_totality() -> Outcome {
    let catalog = QuestionTypeCatalog::load(&gqa("catalog.json")).map_err(|e| e.to_string())?;
    let strategy = "\\PC{0,40}|(obj|cat|attr|rel|global)[ .:!?\\n]{0,3}\\PC{0,10}";
    runner(1000)
        .run(&strategy, |reply| {
            let (t, fallback) = resolve_type(&reply, &catalog, "attr");
            prop_assert!(catalog.contains(&t));
            prop_assert_eq!(fallback, normalize_type_reply(&reply, &catalog).is_none());
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok("1000 replies".into())
}

fn accuracy(dir: &Path, stem: &str) -> Result<(f64, Option<f64>), String> {
    let text = std::fs::read_to_string(dir.join(format!("{stem}.json"))).map_err(|e| e.to_string())?;
    let v: serde_json::Value = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    Ok((v["accuracy"].as_f64().unwrap(), v["classification_accuracy"].as_f64()))
}

fn ablation_ordering() -> Outcome {
    let ws = Workspace::with_extra("replay.jsonl", &executions_line(""));
    ws.compress();
    let all_wrong = gqa("replay_all_wrong.jsonl").display().to_string();
    let dir = |name: &str| ws.path(name).display().to_string();
    for (transcript, mode, out) in [
        (None, "oracle_type", "oracle"),
        (None, "adaptive", "adaptive"),
        (Some(all_wrong.as_str()), "adaptive", "wrong"),
    ] {
        let mut args = Vec::new();
        if let Some(t) = transcript {
            args.extend(["--transcript", t]);
        }
        let out_dir = dir(out);
        args.extend(["eval", "--mode", mode, "--out", &out_dir]);
        ws.run(&args).0.map_err(|e| format!("{out}: {e}"))?;
    }
    let (oracle, _) = accuracy(&ws.path("oracle"), "oracle_type")?;
    let (adaptive, adaptive_cls) = accuracy(&ws.path("adaptive"), "adaptive")?;
    let (wrong, wrong_cls) = accuracy(&ws.path("wrong"), "adaptive")?;
    ensure(oracle >= adaptive && adaptive >= wrong, || format!("{oracle} {adaptive} {wrong}"))?;
    ensure(wrong_cls == Some(0.0), || format!("all-wrong classification accuracy {wrong_cls:?}"))?;
    ensure(adaptive_cls.is_some_and(|c| c < 100.0), || "adaptive run has no misclassification".into())?;
    Ok(format!("{oracle:.1} >= {adaptive:.1} >= {wrong:.1}"))
}

fn confusion_fixture() -> Outcome {
    #[derive(serde::Deserialize)]
    struct Fixture {
        labels: Vec<String>,
        pairs: Vec<(String, String)>,
    }
    let text = std::fs::read_to_string(fixtures().join("eval/confusion_58_1.json")).map_err(|e| e.to_string())?;
    let f: Fixture = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    let m = confusion_matrix(&f.labels, f.pairs.iter().map(|(g, p)| (Some(g.as_str()), Some(p.as_str()))))
        .map_err(|e| e.to_string())?;
    let acc = round1(m.accuracy());
    ensure(acc == 58.1, || format!("accuracy {acc}"))?;
    Ok(format!("{acc:.1}%"))
}

fn sandbox_absent() -> Outcome {
    let none = Workspace::new("replay.jsonl");
    none.compress();
    let (r, _) = none.run(&["eval"]);
    r.map_err(|e| format!("without a sandbox: {e}"))?;
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(none.path("out/adaptive.json")).unwrap()).unwrap();
    ensure(v["errors"]["not executed"] == 20, || format!("errors {}", v["errors"]))?;
    ensure(v["classification_accuracy"].as_f64() == Some(85.0), || "classification not reported".into())?;

    let stub = format!(
        "[sandbox]\ncommand = [\"{}\", \"--executions\", \"{}\"]\n",
        env!("CARGO_BIN_EXE_pcomp-stub-sandbox"),
        gqa("executions.jsonl").display()
    );
    let ws = Workspace::with_sections("replay.jsonl", "", &stub);
    ws.compress();
    ws.run(&["eval"]).0.map_err(|e| format!("with the stub: {e}"))?;
    let (acc, _) = accuracy(&ws.path("out"), "adaptive")?;
    ensure(acc == 75.0, || format!("stub accuracy {acc}"))?;
    Ok(format!("unavailable: 20 not executed; recorded stub: {acc:.1}%"))
}

fn main() {
    let checks: [(&str, fn() -> Outcome, Duration); 8] = [
        ("reduction arithmetic", reduction_arithmetic, Duration::from_millis(1)),
        ("budget identity", budget_identity, Duration::from_secs(1)),
        ("aggregation properties", aggregation_properties, Duration::from_secs(5)),
        ("determinism", determinism, Duration::from_secs(30)),
        ("classification totality", classification_totality, Duration::from_secs(5)),
        ("ablation ordering", ablation_ordering, Duration::from_secs(60)),
        ("confusion accuracy", confusion_fixture, Duration::from_secs(1)),
        ("sandbox absent", sandbox_absent, Duration::from_secs(60)),
    ];
    let mut failed = 0;
    for (name, check, limit) in checks {
        let start = Instant::now();
        let result = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = start.elapsed();
        let (ok, detail) = match result {
            Ok(d) if elapsed <= limit => (true, d),
            Ok(d) => (false, format!("{d}; exceeded {limit:?}")),
            Err(e) => (false, e),
        };
        if !ok {
            failed += 1;
        }
        println!(
            "{} {name}: {detail} ({:.3} s, limit {:?})",
            if ok { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            limit
        );
    }
    if failed > 0 {
        std::process::exit(1);
    }
}

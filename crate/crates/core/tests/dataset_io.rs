mod common;

use common::fixture;
use sgr_core::dataset::{
    build_edit_dataset, load_dfoil, load_edit_tuples, load_error_annotations, load_instances, parse_instances,
    write_edit_tuples, write_instances, DatasetError, DatasetManifest, LoadOptions,
};
use sgr_core::edit::{apply_edits, CorruptionConfig};
use sgr_core::eval::{corpus_stats, error_rates, CorpusStats};
use sgr_core::generator::generate_initial;
use sgr_core::graph::{parse_graph, NormalizationPolicy, ParseMode};
use sgr_core::refine::HeuristicProgrammer;

fn opts() -> LoadOptions {
    LoadOptions::default()
}

#[test]
fn fixture_corpora_load() {
    let gold = load_instances(fixture("gold20.jsonl"), &opts()).unwrap();
    assert_eq!(gold.len(), 20);
    assert!(gold.iter().all(|i| i.gold_graph.is_some() && i.sentence_graphs.is_some()));
    let ten = load_instances(fixture("instances10.jsonl"), &opts()).unwrap();
    assert_eq!(ten.len(), 10);
}

#[test]
fn frozen_stats_row() {
    let ten = load_instances(fixture("instances10.jsonl"), &opts()).unwrap();
    let stats = corpus_stats(&ten);
    assert_eq!(stats.instances, 10);
    assert_eq!(stats.row(), ["20.00", "6.30", "5.60", "4.20", "63"].map(String::from));
    let table = stats.to_string();
    for h in CorpusStats::HEADER {
        assert!(table.contains(h));
    }
}

#[test]
fn heuristic_programmer_accepts_gold_graphs() {
    let gold = load_instances(fixture("gold20.jsonl"), &opts()).unwrap();
    let h = HeuristicProgrammer::default();
    for inst in &gold {
        let g = inst.gold_graph.as_ref().unwrap();
        let flags = h.edits(g, &inst.caption);
        assert_eq!(flags.delete_count(), 0, "{} flagged {:?}", inst.id, flags.deleted_triples(g));
    }
}

#[test]
fn case_study_merge_and_edits() {
    let raw: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(fixture("case_study.json")).unwrap()).unwrap();
    let gold = load_instances(fixture("gold20.jsonl"), &opts()).unwrap();
    let inst = gold.iter().find(|i| i.id == "ferry-terminal").unwrap();
    let merged = generate_initial(inst, None, &NormalizationPolicy::default()).unwrap();
    // the arity-1 "( image )" unit is kept aside, not merged
    assert_eq!(merged.graph.len(), 27);
    assert_eq!(merged.graph.malformed_units(), ["( image )"]);

    let edits = sgr_core::derive_edits(&merged.graph, inst.gold_graph.as_ref().unwrap());
    assert_eq!(edits.delete_count(), 8);
    let inserted: Vec<String> = edits.insertions.iter().map(|t| t.to_string()).collect();
    let expected: Vec<String> = serde_json::from_value(raw["inserted"].clone()).unwrap();
    assert_eq!(inserted, expected);
    let out = apply_edits(&merged.graph, &edits).unwrap();
    let fin = parse_graph(raw["final_graph"].as_str().unwrap(), ParseMode::Strict).unwrap();
    assert_eq!(out.len(), 21);
    assert!(out.same_triples(&fin));
}

#[test]
fn sentence_graphs_load_leniently() {
    let text = r#"{"id": "x", "caption": "A cat. A dog.", "sentence_graphs": ["( cat ) , ( cat , is , small )", "( dog , on , mat"]}"#;
    let inst = parse_instances(text, &opts()).unwrap().remove(0);
    let sg = inst.sentence_graphs.unwrap();
    assert_eq!(sg[0].len(), 1);
    assert_eq!(sg[0].malformed_units(), ["( cat )"]);
    assert!(sg[1].is_empty());
}

#[test]
fn bad_gold_graph_reports_line() {
    let text = "{\"id\": \"a\", \"caption\": \"c\", \"graph\": \"( a , b , c )\"}\n{\"id\": \"b\", \"caption\": \"c\", \"graph\": \"( a , b )\"}\n";
    match parse_instances(text, &opts()) {
        Err(DatasetError::Invalid(d)) => {
            assert_eq!(d.len(), 1);
            assert_eq!(d[0].line, 2);
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn instances_round_trip_through_jsonl() {
    let gold = load_instances(fixture("gold20.jsonl"), &opts()).unwrap();
    let mut buf = Vec::new();
    write_instances(&mut buf, &gold).unwrap();
    let back = parse_instances(std::str::from_utf8(&buf).unwrap(), &opts()).unwrap();
    assert_eq!(back.len(), gold.len());
    for (a, b) in gold.iter().zip(&back) {
        assert_eq!(a.id, b.id);
        assert_eq!(a.sentences, b.sentences);
        assert_eq!(a.gold_graph, b.gold_graph);
    }
}

#[test]
fn edit_dataset_rows_and_files() {
    let gold = load_instances(fixture("gold20.jsonl"), &opts()).unwrap();
    let cfg = CorruptionConfig::default();
    let rows = build_edit_dataset(&gold, &cfg, None, &NormalizationPolicy::default()).unwrap();
    // one merged row plus N variants per instance
    assert_eq!(rows.len(), gold.len() * (1 + cfg.n_variants));
    assert!(rows.iter().all(|r| r.is_consistent()));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("train.jsonl");
    write_edit_tuples(std::fs::File::create(&path).unwrap(), &rows).unwrap();
    let back = load_edit_tuples(&path, &opts()).unwrap();
    let mut again = Vec::new();
    write_edit_tuples(&mut again, &back).unwrap();
    assert_eq!(again, std::fs::read(&path).unwrap());

    let mut manifest = DatasetManifest::new("fixture", &NormalizationPolicy::default());
    manifest.add_split(dir.path(), "train", "train.jsonl").unwrap();
    manifest.write(dir.path()).unwrap();
    let read = DatasetManifest::read(dir.path()).unwrap();
    assert_eq!(read, manifest);

    // a truncated split no longer matches its recorded count
    let text = std::fs::read_to_string(&path).unwrap();
    let first_line = text.lines().next().unwrap();
    std::fs::write(&path, format!("{first_line}\n")).unwrap();
    assert!(DatasetManifest::read(dir.path()).is_err());
}

#[test]
fn dfoil_and_annotation_fixtures_load() {
    assert_eq!(load_dfoil(fixture("dfoil_dominating.jsonl"), &opts()).unwrap().len(), 20);
    assert_eq!(load_dfoil(fixture("dfoil_ties.jsonl"), &opts()).unwrap().len(), 20);
    let ann = load_error_annotations(fixture("error_annotations.jsonl"), &opts()).unwrap();
    let rates = error_rates(&ann);
    assert_eq!(rates.instances, 10);
    let cross = ann.iter().filter(|a| a.cross_sentence_coreference).count() as f64 * 10.0;
    assert!((rates.cross - cross).abs() < 1e-12);
}

mod common;

use accelforge_core::assess::{extract_attributes, match_attributes};
use common::{check_stage1_file, regex_oracle, stage1_labels, stage1_source};

#[test]
fn labels_cover_twenty_files() {
    let labels = stage1_labels();
    assert_eq!(labels.file.len(), 20);
    let on_disk = std::fs::read_dir(common::fixtures().join("stage1"))
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "py"))
        .count();
    assert_eq!(on_disk, 20);
    assert!(labels.file.iter().filter(|f| f.extraneous_code).count() >= 5);
    assert!(labels.file.iter().filter(|f| !f.mismatches.is_empty()).count() >= 8);
}

#[test]
fn extraction_matches_labels_and_oracle() {
    let labels = stage1_labels();
    for f in &labels.file {
        let o = check_stage1_file(&labels, f);
        let src = stage1_source(&f.name);
        assert!(o.oracle_ok, "{}: oracle {:?}\nlabel  {:?}", f.name, regex_oracle(&src), f.expected);
        assert!(o.extraction_ok, "{}: extracted {:?}\nlabel     {:?}", f.name, extract_attributes(&src).unwrap().0, f.expected);
    }
}

#[test]
fn verdicts_flag_exactly_the_planted_mismatches() {
    let labels = stage1_labels();
    for f in &labels.file {
        let o = check_stage1_file(&labels, f);
        let (found, _) = extract_attributes(&stage1_source(&f.name)).unwrap();
        let v = match_attributes(&found, &labels.truth[&f.truth]);
        assert!(o.mismatches_ok, "{}: {:?}", f.name, v.mismatches);
        assert!(o.extraneous_ok, "{}: {:?}", f.name, v.extraneous);
        assert!(!o.false_failure, "{}", f.name);
    }
}

#[test]
fn comments_and_blank_lines_do_not_change_extraction() {
    let labels = stage1_labels();
    for f in &labels.file {
        let src = stage1_source(&f.name);
        let noisy: String = src
            .lines()
            .flat_map(|l| [format!("{l}   "), "# num_inference_steps=999 width=1 pipe.half()".to_string(), String::new()])
            .collect::<Vec<_>>()
            .join("\n");
        assert_eq!(extract_attributes(&noisy).unwrap().0, extract_attributes(&src).unwrap().0, "{}", f.name);
    }
}

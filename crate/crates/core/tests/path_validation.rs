use ilcl_core::forest::{parse_forest, parse_path, Mode, PathVerdict};

const FOREST: &str = include_str!("fixtures/forest_casestudy.txt");
const TABLE: &str = include_str!("fixtures/path_verdicts.txt");

fn expected(text: &str) -> PathVerdict {
    let number = |s: &str| s.trim_end_matches(')').parse::<usize>().unwrap();
    match text {
        "NonexistentState" => PathVerdict::NonexistentState,
        "Redundant" => PathVerdict::Redundant,
        t if t.starts_with("Ok(") => PathVerdict::Ok(number(&t[3..])),
        t if t.starts_with("TooLong(") => PathVerdict::TooLong(number(&t[8..])),
        other => panic!("unknown verdict {other}"),
    }
}

#[test]
fn verdicts_match_the_hand_enumerated_table() {
    let forest = parse_forest(FOREST, Mode::Action).unwrap();
    let rows: Vec<&str> = TABLE.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty()).collect();
    assert_eq!(rows.len(), 12);
    for row in rows {
        let cols: Vec<&str> = row.split(" | ").collect();
        let max: usize = cols[0].parse().unwrap();
        let path = parse_path(cols[1]).unwrap();
        assert_eq!(forest.validate_path(&path, max), expected(cols[2]), "{row}");
    }
}

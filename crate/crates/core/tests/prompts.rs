//! Golden prompt files. Set `UPDATE_GOLDEN=1` to rewrite them after an
//! intended format change, then review the diff by hand.

mod common;

use std::fs;

#[test]
fn prompts_match_golden_files() {
    let update = std::env::var_os("UPDATE_GOLDEN").is_some();
    for (name, actual) in common::prompt_cases() {
        let path = common::fixture(name);
        if update {
            fs::write(&path, &actual).unwrap();
        }
        let expected = fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert!(expected == actual, "{name} differs from its golden file:\n{actual}");
    }
}

#[test]
fn golden_files_end_with_next_plan() {
    for (name, _) in common::prompt_cases() {
        let text = fs::read_to_string(common::fixture(name)).unwrap();
        assert!(text.ends_with("\nNext plan:"), "{name}");
        assert!(text.contains("Task description: "), "{name}");
    }
}

use std::path::Path;

#[test]
fn every_chapter_is_listed_and_doc_tested() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR"));
    let book = root.join("../../book/src");
    let summary = std::fs::read_to_string(book.join("SUMMARY.md")).unwrap();
    let lib = std::fs::read_to_string(root.join("src/lib.rs")).unwrap();
    for entry in std::fs::read_dir(&book).unwrap() {
        let name = entry.unwrap().file_name().to_string_lossy().into_owned();
        if !name.ends_with(".md") || name == "SUMMARY.md" {
            continue;
        }
        assert!(summary.contains(&format!("({name})")), "{name} missing from SUMMARY.md");
        assert!(lib.contains(&format!("book/src/{name}\")")), "{name} not included for doc-tests");
    }
}

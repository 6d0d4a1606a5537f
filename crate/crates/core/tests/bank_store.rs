mod support;

use std::fs;

use giftsmith::bank::{lock_path, open_bank, save_bank, Bank, BankError, BankLock, RecordFilter};
use giftsmith::writer::dialect_form;
use giftsmith::Dialect;
use support::QuestionGen;

/// Export the bank, import the text into fresh copies of each course and
/// check every record reads back as written.
fn assert_interchange(bank: &Bank, dialect: Dialect) {
    for course in &bank.courses {
        let filter = RecordFilter::course(course.course_id.clone());
        let text = bank.export_gift(&filter, dialect);
        let fresh = Bank::new()
            .create_course(&course.course_id, &course.subject)
            .unwrap();
        let outcome = fresh
            .import_gift(&course.course_id, &text, dialect)
            .unwrap();
        assert!(
            outcome.diagnostics.iter().all(|d| !d.is_error()),
            "{:?}",
            outcome.diagnostics
        );
        let originals = bank.list_records(&filter);
        let imported = outcome.bank.list_records(&RecordFilter::all());
        assert_eq!(originals.len(), imported.len());
        for (o, i) in originals.iter().zip(&imported) {
            assert_eq!(i.question, dialect_form(&o.export_question(), dialect));
            assert_eq!(i.qtype_code, o.qtype_code);
            assert_eq!(i.course_id, o.course_id);
        }
        assert_eq!(
            outcome.bank.export_gift(&RecordFilter::all(), dialect),
            text
        );
    }
}

#[test]
fn export_then_import_preserves_records_in_both_dialects() {
    let bank = QuestionGen::new(5).bank(80);
    assert!(bank.records.len() >= 50);
    for d in [Dialect::Paper, Dialect::Moodle] {
        assert_interchange(&bank, d);
    }
}

#[test]
fn generated_banks_survive_save_and_reopen() {
    let dir = tempfile::tempdir().unwrap();
    for seed in 0..20 {
        let bank = QuestionGen::new(seed).bank(30);
        let path = dir.path().join(format!("b{seed}.giftsmith"));
        save_bank(&bank, &path).unwrap();
        let reopened = open_bank(&path).unwrap();
        assert_eq!(reopened, bank);
        assert_eq!(reopened.to_text(), fs::read_to_string(&path).unwrap());
        assert!(!lock_path(&path).exists());
    }
}

#[test]
fn failed_save_leaves_the_previous_file_intact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bank.giftsmith");
    let original = QuestionGen::new(1).bank(10);
    save_bank(&original, &path).unwrap();
    let before = fs::read(&path).unwrap();

    fs::create_dir(dir.path().join("bank.giftsmith.tmp")).unwrap();
    let changed = QuestionGen::new(2).bank(10);
    let err = save_bank(&changed, &path).unwrap_err();
    assert!(matches!(err, BankError::Io { .. }), "{err}");

    assert_eq!(fs::read(&path).unwrap(), before);
    assert_eq!(open_bank(&path).unwrap(), original);
    assert!(!lock_path(&path).exists());
}

#[test]
fn a_held_lock_blocks_other_writers() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bank.giftsmith");
    let guard = BankLock::acquire(&path).unwrap();
    assert!(matches!(
        save_bank(&Bank::new(), &path),
        Err(BankError::Locked(_))
    ));
    drop(guard);
    save_bank(&Bank::new(), &path).unwrap();
}

#[test]
fn truncated_files_are_rejected_not_misread() {
    let bank = QuestionGen::new(9).bank(5);
    let text = bank.to_text();
    let cut = &text[..text.len() / 2];
    assert!(Bank::from_text(cut).is_err());
}

use std::sync::atomic::{AtomicUsize, Ordering};

use proptest::prelude::*;

use super::*;
use crate::evaluation::{narrow_category, Broad, QARecord, QuestionType};

fn report(id: &str, slides: &[&str], text: &str) -> ReportRecord {
    ReportRecord {
        id: id.into(),
        patient_id: format!("p-{id}"),
        text: text.into(),
        slides: slides.iter().map(|s| s.to_string()).collect(),
        cleaned: None,
    }
}

fn last_user(m: &[Message]) -> &str {
    &m.last().unwrap().content
}

fn qa_items(broad: &str) -> String {
    let narrow = Broad::ALL.into_iter().find(|b| b.name() == broad).unwrap().narrow().next().unwrap();
    format!(
        r#"Here you go:
{{"question type": "multi-choice questions", "question": "Which grade?", "options": ["A. low", "B. intermediate", "C. high", "D. none"], "answer": "C", "reasoning": "poorly differentiated", "broad category": "{broad}", "narrow category": "{narrow}"}}
{{"question type": "multi-choice questions", "question": "Which pattern?", "options": ["solid", "papillary", "cribriform", "micropapillary"], "answer": "papillary", "broad category": "{broad}", "narrow category": "{narrow}"}}
{{"question type": "short-answer questions", "question": "What is seen?", "options": [], "answer": "carcinoma", "broad category": "{broad}", "narrow category": "{narrow}"}}
{{"question type": "short-answer questions", "question": "Margins?", "answer": "clear", "broad category": "{broad}", "narrow category": "{narrow}"}}"#
    )
}

/// Generator mock: cleaning drops NOISE lines, captions come back in two
/// paragraphs, QA requests get four valid items.
fn generator(m: &[Message]) -> crate::Result<String> {
    let u = last_user(m);
    if let Some(rest) = u.strip_prefix(templates::REPORT_CLEAN) {
        return Ok(rest.lines().filter(|l| !l.contains("NOISE")).collect::<Vec<_>>().join("\n"));
    }
    if u.ends_with(templates::CAPTION) {
        let first = u.lines().find(|l| !l.trim().is_empty()).unwrap_or("");
        return Ok(format!("Summary of {first}.\n\nNo further findings."));
    }
    let broad = Broad::ALL.into_iter().find(|b| u.contains(&format!("broad category is {}", b.name()))).unwrap();
    Ok(qa_items(broad.name()))
}

#[test]
fn clean_report_contract() {
    let c = FnClient::new("gpt", generator);
    let cache = PromptCache::in_memory();
    let r = report("r1", &["s1"], "Invasive carcinoma.\nNOISE: specimen received in formalin\nMargins clear.");
    let out = clean_report(&r, &c, &cache).unwrap();
    assert_eq!(out.text, "Invasive carcinoma.\nMargins clear.");
    assert_eq!(out.prompt_hash, templates::report_clean_hash());
    assert_eq!(out.prompt_hash, sha256_hex(templates::REPORT_CLEAN));
    assert_eq!(clean_report(&report("r2", &["s"], "  \n"), &c, &cache).unwrap_err().kind(), "usage");
}

#[test]
fn captions_collapse_to_one_paragraph() {
    let cache = PromptCache::in_memory();
    let fixed = FnClient::new("gpt", |_m: &[Message]| Ok("A single paragraph of findings.".to_string()));
    assert_eq!(gen_caption("report", &fixed, &cache).unwrap().text, "A single paragraph of findings.");
    let multi = FnClient::new("gpt2", |_m: &[Message]| Ok("First part.\n\n  Second part.\nThird.\n".to_string()));
    let a = gen_caption("report", &multi, &cache).unwrap();
    assert_eq!(a.text, "First part. Second part. Third.");
    assert_eq!(a, gen_caption("report", &multi, &PromptCache::in_memory()).unwrap());
}

#[test]
fn qa_generation_schema() {
    let cache = PromptCache::in_memory();
    let r = report("r1", &["s1"], "x");
    let c = FnClient::new("gpt", generator);
    let (kept, dropped) = gen_qas(&r, "cleaned", Broad::Diagnosis, &c, &cache).unwrap();
    assert_eq!(kept.len(), 4);
    assert!(dropped.is_empty());
    assert_eq!(kept[0].record.answer, "C");
    assert_eq!(kept[0].record.options[0], "low");
    assert_eq!(kept[0].reasoning, "poorly differentiated");
    assert_eq!(kept[1].record.answer, "B");
    assert_eq!(kept[2].record.question_type, QuestionType::ShortAnswer);
    assert!(kept.iter().all(|k| k.record.validate().is_ok() && k.prompt_hash == templates::qa_hash(Broad::Diagnosis)));

    let bad = FnClient::new("gpt", |_m: &[Message]| {
        Ok(r#"[{"question type": "multi-choice questions", "question": "q", "options": ["a","b","c","d"], "answer": "A", "broad category": "Clinical"},
               {"question type": "multi-choice questions", "question": "q", "options": ["a","b","c"], "answer": "A", "narrow category": "Risk Factors"},
               {"question type": "short-answer questions", "question": "q", "answer": "x", "narrow category": "Cell Counting"},
               {"question type": "multi-choice questions", "question": "q", "options": ["a","b","c","d"], "answer": "b", "narrow category": "Risk Factors"}]"#
            .to_string())
    });
    let (kept, dropped) = gen_qas(&r, "cleaned", Broad::Clinical, &bad, &cache).unwrap();
    assert_eq!(kept.len(), 1);
    assert_eq!(kept[0].record.answer, "B");
    assert_eq!(dropped.iter().map(|d| d.item).collect::<Vec<_>>(), vec![0, 1, 2]);
    assert!(dropped[0].reason.contains("narrow"));

    let junk = FnClient::new("junk", |_m: &[Message]| Ok("no json here".to_string()));
    let (kept, dropped) = gen_qas(&r, "cleaned", Broad::Clinical, &junk, &cache).unwrap();
    assert!(kept.is_empty() && dropped.len() == 1);
}

fn mc(id: &str) -> QARecord {
    let (narrow, broad) = narrow_category("Grading").unwrap();
    QARecord {
        id: id.into(),
        slide_id: "s".into(),
        question: "Which grade?".into(),
        options: vec!["one".into(), "two".into(), "three".into(), "four".into()],
        answer: "B".into(),
        question_type: QuestionType::MultiChoice,
        broad,
        narrow: narrow.into(),
        task: None,
    }
}

fn scripted(model: &str, correct: bool) -> FnClient<impl Fn(&[Message]) -> crate::Result<String> + Send + Sync> {
    FnClient::new(model, move |m: &[Message]| {
        assert!(!m.iter().any(|x| x.content.contains("report")));
        Ok(if correct { "B" } else { "(D)" }.to_string())
    })
}

#[test]
fn filter_truth_table() {
    for mask in 0u32..16 {
        let truth: [bool; 4] = std::array::from_fn(|i| mask & (1 << i) != 0);
        let clients: Vec<_> = (0..4).map(|i| scripted(&format!("m{i}"), truth[i])).collect();
        let refs: Vec<&dyn ChatClient> = clients.iter().map(|c| c as &dyn ChatClient).collect();
        let v = ensemble_filter(&mc("q"), &refs, &PromptCache::in_memory()).unwrap();
        assert_eq!(v.correct, truth);
        assert_eq!(v.kept, mask.count_ones() <= 2, "mask {mask:04b}");
    }
    let t = verdict("x", [true, true, true, false], [false; 4]);
    assert!(!t.kept);
    assert!(verdict("x", [true, true, false, false], [false; 4]).kept);
}

#[test]
fn filter_failure_counts_as_incorrect() {
    let ok: Vec<_> = (0..3).map(|i| scripted(&format!("m{i}"), true)).collect();
    let broken = SequenceClient::new("down", Vec::<String>::new());
    let refs: Vec<&dyn ChatClient> = vec![&ok[0], &ok[1], &broken, &ok[2]];
    let v = ensemble_filter(&mc("q"), &refs, &PromptCache::in_memory()).unwrap();
    assert_eq!(v.correct, [true, true, false, true]);
    assert_eq!(v.failed, [false, false, true, false]);
    assert!(!v.kept);
    assert!(ensemble_filter(&mc("q"), &refs[..3], &PromptCache::in_memory()).is_err());
}

#[test]
fn split_rules() {
    let multi = report("a", &["s1", "s2", "s3"], "x");
    let s = split_assign(std::slice::from_ref(&multi), 1).unwrap();
    assert_eq!(s.train.len(), 3);
    assert!(s.test.is_empty());

    let singles: Vec<ReportRecord> = (0..100).map(|i| report(&format!("r{i}"), &[&format!("t{i:03}")], "x")).collect();
    let s = split_assign(&singles, 9).unwrap();
    assert_eq!((s.train.len(), s.test.len()), (80, 20));
    assert_eq!(s, split_assign(&singles, 9).unwrap());
    assert_ne!(s, split_assign(&singles, 10).unwrap());

    let clash = [multi, report("b", &["s2"], "y")];
    assert_eq!(split_assign(&clash, 1).unwrap_err().kind(), "usage");
}

proptest! {
    #[test]
    fn split_is_disjoint_and_total(sizes in proptest::collection::vec(1usize..4, 1..40), seed in 0u64..1000) {
        let mut k = 0;
        let reports: Vec<ReportRecord> = sizes.iter().enumerate().map(|(i, &n)| {
            let slides: Vec<String> = (0..n).map(|_| { k += 1; format!("s{k}") }).collect();
            let refs: Vec<&str> = slides.iter().map(String::as_str).collect();
            report(&format!("r{i}"), &refs, "x")
        }).collect();
        let s = split_assign(&reports, seed).unwrap();
        prop_assert!(s.train.is_disjoint(&s.test));
        prop_assert_eq!(s.train.len() + s.test.len(), k);
        for r in reports.iter().filter(|r| r.slides.len() > 1) {
            prop_assert!(r.slides.iter().all(|x| s.train.contains(x)));
        }
        let singles = sizes.iter().filter(|&&n| n == 1).count();
        prop_assert_eq!(s.test.len(), singles - (singles as f64 * 0.8).round() as usize);
    }
}

#[test]
fn labels_become_questions() {
    let t = bcnb_task("Tumor Type").unwrap();
    let r = labels_to_vqa(t.name, t.labels, t.narrow, "slide-1", "Invasive ductal carcinoma").unwrap();
    assert_eq!(r.question, "What is the Tumor Type shown in this whole slide image?");
    assert_eq!(r.answer, "A");
    assert_eq!(r.options.len(), 3);
    assert!(r.validate().is_ok());
    let er = bcnb_to_vqa("ER Status", "slide-1", "Negative").unwrap();
    assert_eq!((er.options.len(), er.answer.as_str()), (2, "B"));
    assert_eq!(er.task.as_deref(), Some("ER Status"));
    assert!(bcnb_to_vqa("ER Status", "slide-1", "Unknown").is_err());
    let many: Vec<String> = (0..27).map(|i| format!("l{i}")).collect();
    let many: Vec<&str> = many.iter().map(String::as_str).collect();
    assert_eq!(labels_to_vqa("Big", &many, "Grading", "s", "l0").unwrap_err().kind(), "usage");
    assert!(templates::label_transform("Tumor Type", t.labels).contains("concerning Tumor Type, transforming"));
}

#[test]
fn templates_are_pinned() {
    assert!(templates::GENERAL.contains("2 multi-choice questions amd 2 short-answer questions"));
    assert!(templates::GENERAL.contains("\u{201c}anwser\u{201d}"));
    assert!(templates::objective(Broad::Microscopy).contains("For the narrow category:  Tissue Architecture and Arrangement: Questions should evaluate"));
    assert_eq!(templates::objective(Broad::Clinical).matches(": Questions should").count(), 4);
    let hashes: std::collections::HashSet<String> = Broad::ALL.into_iter().map(templates::qa_hash).collect();
    assert_eq!(hashes.len(), 3);
}

struct Counting<C> {
    inner: C,
    calls: AtomicUsize,
}

impl<C: ChatClient> ChatClient for Counting<C> {
    fn model(&self) -> &str {
        self.inner.model()
    }

    fn complete(&self, m: &[Message]) -> crate::Result<String> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.complete(m)
    }
}

fn corpus() -> Vec<ReportRecord> {
    let mut v: Vec<ReportRecord> = (0..10)
        .map(|i| report(&format!("r{i:02}"), &[&format!("slide{i:02}")], &format!("Report {i} findings.\nNOISE line")))
        .collect();
    v.push(report("r10", &["slide10", "slide11"], "Two slides."));
    v
}

#[test]
fn pipeline_is_resumable_and_ordered() {
    let dir = tempfile::tempdir().unwrap();
    let cache_path = dir.path().join("cache.jsonl");
    let gen = Counting { inner: FnClient::new("gpt", generator), calls: AtomicUsize::new(0) };
    let filters: Vec<_> = (0..4)
        .map(|i| Counting { inner: scripted(&format!("f{i}"), i < 2), calls: AtomicUsize::new(0) })
        .collect();
    let refs: Vec<&dyn ChatClient> = filters.iter().map(|c| c as &dyn ChatClient).collect();

    let cache = PromptCache::open(&cache_path).unwrap();
    let first = curate(&corpus(), &gen, &refs, &cache, 3, 5).unwrap();
    first.write(&dir.path().join("run1")).unwrap();
    assert_eq!(gen.calls.load(Ordering::SeqCst), 11 * 5);
    assert!(first.flagged.is_empty());
    assert_eq!(first.cleaned.len(), 11);
    assert!(first.cleaned.iter().all(|r| !r.cleaned.as_ref().unwrap().contains("NOISE")));
    assert_eq!(first.split.test.len(), 2);
    assert_eq!(first.captions_test.len(), 2);
    assert!(first.split.train.contains("slide10") && first.split.train.contains("slide11"));
    assert!(first.bench_vqa.iter().all(|q| first.split.test.contains(&q.slide_id)));
    assert_eq!(first.verdicts.len(), 2 * 3 * 2);
    assert!(first.verdicts.iter().all(|v| v.kept));
    assert_eq!(first.bench_vqa.len(), 12);
    assert!(first.captions_train[0].caption.starts_with("Summary of Report"));
    assert!(!first.captions_train[0].caption.contains('\n'));
    drop(cache);

    gen.calls.store(0, Ordering::SeqCst);
    let before: usize = filters.iter().map(|f| f.calls.load(Ordering::SeqCst)).sum();
    let cache = PromptCache::open(&cache_path).unwrap();
    let second = curate(&corpus(), &gen, &refs, &cache, 1, 5).unwrap();
    second.write(&dir.path().join("run2")).unwrap();
    assert_eq!(gen.calls.load(Ordering::SeqCst), 0);
    assert_eq!(filters.iter().map(|f| f.calls.load(Ordering::SeqCst)).sum::<usize>(), before);
    for name in OUTPUT_FILES {
        let a = std::fs::read(dir.path().join("run1").join(name)).unwrap();
        let b = std::fs::read(dir.path().join("run2").join(name)).unwrap();
        assert_eq!(a, b, "{name}");
    }
}

#[test]
fn pipeline_flags_failures_and_continues() {
    let gen = FnClient::new("gpt", |m: &[Message]| {
        if last_user(m).contains("BROKEN") {
            Err(crate::Error::Client("HTTP 500".into()))
        } else {
            generator(m)
        }
    });
    let filters: Vec<_> = (0..4).map(|i| scripted(&format!("f{i}"), true)).collect();
    let refs: Vec<&dyn ChatClient> = filters.iter().map(|c| c as &dyn ChatClient).collect();
    let reports = vec![report("ok", &["s1"], "fine"), report("bad", &["s2"], "BROKEN report")];
    let out = curate(&reports, &gen, &refs, &PromptCache::in_memory(), 2, 0).unwrap();
    assert_eq!(out.flagged.len(), 1);
    assert_eq!((out.flagged[0].id.as_str(), out.flagged[0].stage.as_str()), ("bad", "clean"));
    assert_eq!(out.cleaned.len(), 1);
    assert!(out.bench_vqa.is_empty() || out.verdicts.iter().all(|v| !v.kept));
}

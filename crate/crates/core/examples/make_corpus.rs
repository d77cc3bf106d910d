//! Regenerates the bundled synthetic corpus under `corpus/`.
//!
//! ```text
//! cargo run -p pagestream-core --example make_corpus [-- <out-dir>]
//! ```

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pagestream::harness::document::{save_document, DocumentFile, OcrRecord, PageRecord, QaRecord};
use pagestream::streaming::{MockSlm, ScriptEntry, TokenDistribution};

const VOCAB: [&str; 10] = [
    "Not", "Answerable", "4.2", "3.9", "million", "Nordwind", "GmbH", "Elena", "Vogt", "40",
];

const FILLER: [&str; 24] = [
    "the", "report", "total", "revenue", "quarter", "page", "section", "figure", "table", "notes",
    "amount", "date", "signed", "board", "summary", "annual", "item", "invoice", "meeting",
    "agenda", "torque", "bolt", "warning", "appendix",
];

/// One position per answer word: `peak` mass on the word, the rest spread
/// evenly over the vocabulary.
fn dists(answer: &str, peak: f64) -> Vec<TokenDistribution> {
    let n = VOCAB.len();
    answer
        .split(' ')
        .map(|w| {
            let idx = VOCAB.iter().position(|v| *v == w).unwrap_or(n - 1);
            let rest = (1.0 - peak) / (n - 1) as f64;
            let mut p = vec![rest; n];
            p[idx] = peak;
            let sum: f64 = p.iter().sum();
            TokenDistribution::new(p.iter().map(|v| v / sum).collect()).unwrap()
        })
        .collect()
}

fn entry(query: &str, pages: &[u32], answer: &str, peak: f64) -> ScriptEntry {
    ScriptEntry {
        query: query.into(),
        pages: pages.to_vec(),
        answer: answer.into(),
        dists: dists(answer, peak),
    }
}

fn page(rng: &mut ChaCha8Rng, id: u32, dims: (u32, u32), words: usize, evidence: &[&str]) -> PageRecord {
    let mut ocr = Vec::with_capacity(words + evidence.len());
    let texts: Vec<&str> = (0..words)
        .map(|_| FILLER[rng.random_range(0..FILLER.len())])
        .chain(evidence.iter().copied())
        .collect();
    for text in texts {
        let w = 0.02 + 0.012 * text.len() as f64;
        let x0 = rng.random_range(0.02..(0.98 - w));
        let y0 = rng.random_range(0.02..0.96);
        let conf = (rng.random_range(0.55..1.0f64) * 1000.0).round() / 1000.0;
        let round = |v: f64| (v * 1e4).round() / 1e4;
        ocr.push(OcrRecord {
            text: text.into(),
            bbox: [round(x0), round(y0), round(x0 + w), round(y0 + 0.018)],
            conf,
        });
    }
    PageRecord {
        page_id: id,
        width_px: dims.0,
        height_px: dims.1,
        ocr,
    }
}

struct Spec {
    file: &'static str,
    doc_id: &'static str,
    pages: u32,
    dims: (u32, u32),
    evidence: Vec<(u32, Vec<&'static str>)>,
    qa: Vec<QaRecord>,
    entries: Vec<ScriptEntry>,
}

fn qa(query: &str, answer: &str, evidence: &[u32]) -> QaRecord {
    QaRecord {
        query: query.into(),
        answer: answer.into(),
        evidence_pages: evidence.to_vec(),
    }
}

fn specs() -> Vec<Spec> {
    const REVENUE: &str = "What was the reported net revenue?";
    const ISSUER: &str = "Who issued the invoice?";
    const CHAIR: &str = "Who chaired the meeting?";
    const TORQUE: &str = "What torque is specified for the main bolt?";
    vec![
        // Three segments at segment_len 2: confident and right, abstaining,
        // unsure and wrong.
        Spec {
            file: "revenue_6p.json",
            doc_id: "revenue_6p",
            pages: 6,
            dims: (1240, 1754),
            evidence: vec![(1, vec!["4.2", "million"]), (5, vec!["3.9", "million"])],
            qa: vec![
                qa(REVENUE, "4.2 million", &[1]),
                qa("Who signed the audit letter?", "Not Answerable", &[]),
            ],
            entries: vec![
                entry(REVENUE, &[1], "4.2 million", 0.95),
                entry(REVENUE, &[5], "3.9 million", 0.45),
            ],
        },
        Spec {
            file: "invoice_3p.json",
            doc_id: "invoice_3p",
            pages: 3,
            dims: (1275, 1650),
            evidence: vec![(2, vec!["Nordwind", "GmbH"])],
            qa: vec![qa(ISSUER, "Nordwind GmbH", &[2])],
            entries: vec![entry(ISSUER, &[2], "Nordwind GmbH", 0.9)],
        },
        // Only the second 10-page segment holds the evidence.
        Spec {
            file: "minutes_12p.json",
            doc_id: "minutes_12p",
            pages: 12,
            dims: (1920, 1080),
            evidence: vec![(11, vec!["Elena", "Vogt"])],
            qa: vec![qa(CHAIR, "Elena Vogt", &[11])],
            entries: vec![entry(CHAIR, &[11], "Elena Vogt", 0.9)],
        },
        Spec {
            file: "ledger_40p.json",
            doc_id: "ledger_40p",
            pages: 40,
            dims: (1240, 1754),
            evidence: vec![(7, vec!["3.9", "million"]), (33, vec!["4.2", "million"])],
            qa: vec![
                qa(REVENUE, "4.2 million", &[33]),
                qa(ISSUER, "Not Answerable", &[]),
            ],
            entries: vec![
                entry(REVENUE, &[7], "3.9 million", 0.5),
                entry(REVENUE, &[33], "4.2 million", 0.92),
            ],
        },
        Spec {
            file: "manual_120p.json",
            doc_id: "manual_120p",
            pages: 120,
            dims: (1275, 1650),
            evidence: vec![(3, vec!["40"]), (57, vec!["40"])],
            qa: vec![qa(TORQUE, "40 Nm", &[57]), qa(CHAIR, "Elena Vogt", &[88])],
            entries: vec![
                entry(TORQUE, &[3], "4.2", 0.4),
                entry(TORQUE, &[57], "40", 0.97),
            ],
        },
    ]
}

fn main() {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("corpus"));
    std::fs::create_dir_all(&out).expect("create corpus dir");
    for (n, spec) in specs().into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(0xC0DE + n as u64);
        let pages = (1..=spec.pages)
            .map(|id| {
                let ev: &[&str] = spec
                    .evidence
                    .iter()
                    .find(|(p, _)| *p == id)
                    .map_or(&[], |(_, w)| w.as_slice());
                page(&mut rng, id, spec.dims, 24, ev)
            })
            .collect();
        let doc = DocumentFile {
            doc_id: spec.doc_id.into(),
            pages,
            qa: spec.qa,
            slm_script: Some(MockSlm {
                vocab: VOCAB.iter().map(|s| s.to_string()).collect(),
                entries: spec.entries,
                abstain_dists: None,
            }),
        };
        doc.clone().validate().expect("generated document is valid");
        let path = out.join(spec.file);
        save_document(&path, &doc).expect("write document");
        println!("wrote {}", path.display());
    }
}

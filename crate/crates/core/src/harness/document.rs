//! JSON document files: pages with OCR words, QA pairs and an optional
//! scripted model.

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::compressor::Page;
use crate::geometry::{BBox, OcrToken};
use crate::streaming::MockSlm;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OcrRecord {
    pub text: String,
    pub bbox: [f64; 4],
    pub conf: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PageRecord {
    pub page_id: u32,
    pub width_px: u32,
    pub height_px: u32,
    #[serde(default)]
    pub ocr: Vec<OcrRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QaRecord {
    pub query: String,
    pub answer: String,
    #[serde(default)]
    pub evidence_pages: Vec<u32>,
}

/// On-disk document schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DocumentFile {
    pub doc_id: String,
    pub pages: Vec<PageRecord>,
    #[serde(default)]
    pub qa: Vec<QaRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slm_script: Option<MockSlm>,
}

/// Validated document ready for compression and streaming.
#[derive(Debug, Clone, PartialEq)]
pub struct Document {
    pub doc_id: String,
    pub pages: Vec<Page>,
    pub qa: Vec<QaRecord>,
    pub slm: MockSlm,
}

impl Document {
    pub fn page(&self, page_id: u32) -> Option<&Page> {
        self.pages.iter().find(|p| p.page_id == page_id)
    }

    pub fn to_file(&self) -> DocumentFile {
        DocumentFile {
            doc_id: self.doc_id.clone(),
            pages: self
                .pages
                .iter()
                .map(|p| PageRecord {
                    page_id: p.page_id,
                    width_px: p.width_px,
                    height_px: p.height_px,
                    ocr: p
                        .ocr
                        .iter()
                        .map(|t| OcrRecord {
                            text: t.text.clone(),
                            bbox: t.bbox.to_array(),
                            conf: t.conf,
                        })
                        .collect(),
                })
                .collect(),
            qa: self.qa.clone(),
            slm_script: Some(self.slm.clone()),
        }
    }
}

fn invalid(at: impl Into<String>, msg: impl ToString) -> HarnessError {
    HarnessError::Invalid {
        at: at.into(),
        msg: msg.to_string(),
    }
}

impl DocumentFile {
    pub fn validate(self) -> Result<Document, HarnessError> {
        if self.pages.is_empty() {
            return Err(invalid("pages", "document has no pages"));
        }
        let mut ids = BTreeSet::new();
        let mut prev = None;
        let mut pages = Vec::with_capacity(self.pages.len());
        for (n, p) in self.pages.into_iter().enumerate() {
            let at = format!("pages[{n}]");
            if !ids.insert(p.page_id) {
                return Err(invalid(format!("{at}.page_id"), format!("duplicate page_id {}", p.page_id)));
            }
            if prev.is_some_and(|q| p.page_id < q) {
                return Err(invalid(format!("{at}.page_id"), "page ids must be ascending"));
            }
            prev = Some(p.page_id);
            if p.width_px == 0 || p.height_px == 0 {
                return Err(invalid(at, "page dimensions must be >= 1 px"));
            }
            let mut ocr = Vec::with_capacity(p.ocr.len());
            for (k, t) in p.ocr.into_iter().enumerate() {
                let at = format!("{at}.ocr[{k}]");
                let [x0, y0, x1, y1] = t.bbox;
                let bbox = BBox::new(x0, y0, x1, y1)
                    .map_err(|e| invalid(format!("{at}.bbox"), format!("{e} (token {:?})", t.text)))?;
                let tok = OcrToken::new(t.text, bbox, t.conf).map_err(|e| invalid(at.clone(), e))?;
                ocr.push(tok);
            }
            pages.push(Page {
                page_id: p.page_id,
                width_px: p.width_px,
                height_px: p.height_px,
                ocr,
            });
        }
        for (n, qa) in self.qa.iter().enumerate() {
            if let Some(bad) = qa.evidence_pages.iter().find(|p| !ids.contains(p)) {
                return Err(invalid(
                    format!("qa[{n}].evidence_pages"),
                    format!("page {bad} is not in the document"),
                ));
            }
        }
        let slm = self.slm_script.unwrap_or_default();
        slm.validate().map_err(|e| invalid("slm_script", e))?;
        Ok(Document {
            doc_id: self.doc_id,
            pages,
            qa: self.qa,
            slm,
        })
    }
}

/// Parses JSON text, reporting the JSON path of the first schema error.
pub fn parse_document(text: &str, origin: &str) -> Result<Document, HarnessError> {
    parse_json::<DocumentFile>(text, origin)?.validate()
}

pub fn parse_json<T: for<'de> Deserialize<'de>>(text: &str, origin: &str) -> Result<T, HarnessError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| HarnessError::Parse {
        file: origin.to_string(),
        at: e.path().to_string(),
        msg: e.into_inner().to_string(),
    })
}

pub fn read_text(path: &Path) -> Result<String, HarnessError> {
    fs::read_to_string(path).map_err(|source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_document(path: impl AsRef<Path>) -> Result<Document, HarnessError> {
    let path = path.as_ref();
    parse_document(&read_text(path)?, &path.display().to_string())
}

/// Writes `contents` to a sibling temp file and renames it over `path`.
pub fn write_atomic(path: impl AsRef<Path>, contents: &[u8]) -> Result<(), HarnessError> {
    let path = path.as_ref();
    let io_err = |source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    };
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err)?;
    tmp.write_all(contents).map_err(io_err)?;
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        tmp.as_file()
            .set_permissions(fs::Permissions::from_mode(0o644))
            .map_err(io_err)?;
    }
    tmp.as_file().sync_all().map_err(io_err)?;
    tmp.persist(path).map_err(|e| io_err(e.error))?;
    Ok(())
}

pub fn save_document(path: impl AsRef<Path>, doc: &DocumentFile) -> Result<(), HarnessError> {
    let mut text = serde_json::to_string_pretty(doc).map_err(|e| HarnessError::Internal(e.to_string()))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

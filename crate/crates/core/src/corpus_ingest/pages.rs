//! Page-image inputs: `<doc_id>_p<page>.png` directories and PDF rasterization.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;

use super::IngestError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PageImage {
    pub document_id: String,
    pub page_number: u32,
    pub image_bytes: Vec<u8>,
}

fn parse_name(file_name: &str) -> Option<(String, u32)> {
    let stem = file_name.strip_suffix(".png")?;
    let (doc, page) = stem.rsplit_once("_p")?;
    // pdftoppm writes `<prefix>-01.png`, so a dash before the number is accepted.
    let page: u32 = page.strip_prefix('-').unwrap_or(page).parse().ok()?;
    (!doc.is_empty() && page > 0).then(|| (doc.to_string(), page))
}

/// Reads `<doc_id>_p<page>.png` files from `dir`, grouped by document and
/// sorted by page. Other files are ignored.
pub fn load_page_images(dir: &Path) -> Result<BTreeMap<String, Vec<PageImage>>, IngestError> {
    let io = |source| IngestError::Io {
        path: dir.to_path_buf(),
        source,
    };
    let mut out: BTreeMap<String, Vec<PageImage>> = BTreeMap::new();
    for entry in std::fs::read_dir(dir).map_err(io)? {
        let entry = entry.map_err(io)?;
        let name = entry.file_name();
        let Some((doc, page)) = name.to_str().and_then(parse_name) else {
            continue;
        };
        let path = entry.path();
        let image_bytes = std::fs::read(&path).map_err(|source| IngestError::Io { path, source })?;
        out.entry(doc.clone()).or_default().push(PageImage {
            document_id: doc,
            page_number: page,
            image_bytes,
        });
    }
    for pages in out.values_mut() {
        pages.sort_by_key(|p| p.page_number);
        if let Some(w) = pages.windows(2).find(|w| w[0].page_number == w[1].page_number) {
            return Err(IngestError::InvalidPages(format!(
                "duplicate page {} for `{}`",
                w[0].page_number, w[0].document_id
            )));
        }
    }
    Ok(out)
}

/// Runs the configured rasterizer on `pdf`, which must write
/// `<doc_id>_p<page>.png` files into `out_dir`.
///
/// `command` is a shell command template with `{pdf}`, `{out_dir}` and
/// `{doc_id}` placeholders, e.g.
/// `pdftoppm -png -r 200 {pdf} {out_dir}/{doc_id}_p`.
pub fn rasterize_pdf(command: &str, pdf: &Path, out_dir: &Path, doc_id: &str) -> Result<(), IngestError> {
    let rendered = command
        .replace("{pdf}", &shell_quote(&pdf.to_string_lossy()))
        .replace("{out_dir}", &shell_quote(&out_dir.to_string_lossy()))
        .replace("{doc_id}", &shell_quote(doc_id));
    let output = Command::new("sh")
        .arg("-c")
        .arg(&rendered)
        .output()
        .map_err(|e| IngestError::Rasterizer(format!("cannot start `{rendered}`: {e}")))?;
    if !output.status.success() {
        return Err(IngestError::Rasterizer(format!(
            "`{rendered}` exited with {}: {}",
            output.status,
            String::from_utf8_lossy(&output.stderr).trim()
        )));
    }
    Ok(())
}

fn shell_quote(s: &str) -> String {
    format!("'{}'", s.replace('\'', r"'\''"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_names() {
        assert_eq!(parse_name("algebra_book_p12.png"), Some(("algebra_book".into(), 12)));
        assert_eq!(parse_name("algebra_book_p-03.png"), Some(("algebra_book".into(), 3)));
        assert_eq!(parse_name("x_p0.png"), None);
        assert_eq!(parse_name("notes.png"), None);
        assert_eq!(parse_name("a_p1.jpg"), None);
    }

    #[test]
    fn loads_and_sorts_pages() {
        let dir = tempfile::tempdir().unwrap();
        for (name, byte) in [("b_p2.png", 2u8), ("b_p1.png", 1), ("b_p10.png", 10), ("readme.txt", 0)] {
            std::fs::write(dir.path().join(name), [byte]).unwrap();
        }
        let docs = load_page_images(dir.path()).unwrap();
        let pages: Vec<u32> = docs["b"].iter().map(|p| p.page_number).collect();
        assert_eq!(pages, [1, 2, 10]);
        assert_eq!(docs["b"][2].image_bytes, [10]);
    }

    #[test]
    fn rasterizer_invocation() {
        let dir = tempfile::tempdir().unwrap();
        let pdf = dir.path().join("in.pdf");
        std::fs::write(&pdf, b"%PDF").unwrap();
        rasterize_pdf("cp {pdf} {out_dir}/{doc_id}_p1.png", &pdf, dir.path(), "book").unwrap();
        assert!(dir.path().join("book_p1.png").exists());
        let err = rasterize_pdf("exit 3", &pdf, dir.path(), "book").unwrap_err();
        assert!(matches!(err, IngestError::Rasterizer(_)));
    }
}

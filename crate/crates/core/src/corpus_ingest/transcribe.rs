//! Page-by-page vision transcription into one LaTeX document.

use super::{normalize_whitespace, IngestError, LatexDocument, Origin, PageImage, PageSpan};
use crate::llm_gateway::{CallContext, DecodingParams, Gateway, GatewayError, ImageData, PromptTemplate};

/// Comment substituted for a page whose transcription came back empty.
/// `{page}` is replaced with the page number.
pub const EMPTY_PAGE_MARKER: &str = "% lemmahead: empty transcription for page {page}";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transcription {
    pub document: LatexDocument,
    /// Pages whose transcription was empty and replaced by a marker.
    pub flagged_pages: Vec<u32>,
}

fn check_pages(pages: &[PageImage]) -> Result<(), IngestError> {
    let Some(first) = pages.first() else {
        return Err(IngestError::InvalidPages("no pages given".into()));
    };
    for page in pages {
        if page.document_id != first.document_id {
            return Err(IngestError::InvalidPages(format!(
                "pages from two documents: `{}` and `{}`",
                first.document_id, page.document_id
            )));
        }
        if page.page_number == 0 {
            return Err(IngestError::InvalidPages("page numbers start at 1".into()));
        }
        if page.image_bytes.is_empty() {
            return Err(IngestError::InvalidPages(format!(
                "page {} has no image data",
                page.page_number
            )));
        }
    }
    if pages.windows(2).any(|w| w[0].page_number >= w[1].page_number) {
        return Err(IngestError::InvalidPages("pages must be sorted by page number".into()));
    }
    Ok(())
}

/// Transcribes each page with one model call and concatenates the results
/// in page order, separated by newlines.
pub fn transcribe_pages(
    pages: &[PageImage],
    gateway: &Gateway,
    template: &PromptTemplate,
    decoding: &DecodingParams,
) -> Result<Transcription, IngestError> {
    check_pages(pages)?;
    let document_id = pages[0].document_id.clone();
    let mut latex = String::new();
    let mut spans = Vec::with_capacity(pages.len());
    let mut flagged = Vec::new();
    for page in pages {
        let number = page.page_number.to_string();
        let mut messages = template
            .render(&[("document_id", &document_id), ("page_number", &number)])
            .map_err(|e| IngestError::Transcription {
                page_number: page.page_number,
                retryable: false,
                source: e.into(),
            })?;
        if let Some(last) = messages.last_mut() {
            last.images.push(ImageData::png(page.image_bytes.clone()));
        }
        let ctx = CallContext::new(template.id());
        let text = match gateway.complete(&ctx, &messages, decoding) {
            Ok(text) => normalize_whitespace(text.trim()),
            Err(GatewayError::EmptyResponse) => {
                tracing::warn!(document = %document_id, page = page.page_number, "empty transcription");
                flagged.push(page.page_number);
                EMPTY_PAGE_MARKER.replace("{page}", &number)
            }
            Err(source) => {
                let retryable = matches!(source, GatewayError::RetriesExhausted { .. });
                return Err(IngestError::Transcription {
                    page_number: page.page_number,
                    retryable,
                    source,
                });
            }
        };
        if !latex.is_empty() {
            latex.push('\n');
        }
        let start = latex.len();
        latex.push_str(&text);
        spans.push(PageSpan {
            page_number: page.page_number,
            start,
            end: latex.len(),
        });
    }
    Ok(Transcription {
        document: LatexDocument {
            document_id,
            latex,
            origin: Origin::Transcribed,
            pages: spans,
        },
        flagged_pages: flagged,
    })
}

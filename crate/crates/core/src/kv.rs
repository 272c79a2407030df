//! Line-oriented `key = value` grammar shared by ENVI headers and the text
//! config files (scenario and scene specs).
//!
//! Values are either scalars (rest of the line) or brace-delimited lists that
//! may span lines. Keys are lowercased and internal whitespace is collapsed,
//! so `Data Type`, `data type` and `data  type` all name the same key.

use crate::error::{Error, Result};

/// One parsed entry, in input order. Repeated keys are kept as-is.
pub(crate) type Entries = Vec<(String, String)>;

pub(crate) fn normalize_key(raw: &str) -> String {
    raw.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_ascii_lowercase()
}

/// Parse `key = value` lines. Blank lines and lines starting with `;` or `#`
/// are skipped. A value starting with `{` is read until its matching `}`,
/// possibly across lines; the braces are stripped and the inner text kept.
pub(crate) fn parse_entries(text: &str) -> Result<Entries> {
    let mut entries = Entries::new();
    let mut lines = text.lines();
    while let Some(line) = lines.next() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with(';') || trimmed.starts_with('#') {
            continue;
        }
        let Some(eq) = line.find('=') else {
            return Err(Error::Config(format!("expected `key = value`, got `{trimmed}`")));
        };
        let key = normalize_key(&line[..eq]);
        if key.is_empty() {
            return Err(Error::Config(format!("missing key before `=` in `{trimmed}`")));
        }
        let rest = line[eq + 1..].trim();
        let value = if let Some(open) = rest.strip_prefix('{') {
            let mut depth = 1usize;
            let mut buf = String::new();
            let mut cur: &str = open;
            loop {
                for ch in cur.chars() {
                    match ch {
                        '{' => {
                            depth += 1;
                            buf.push(ch);
                        }
                        '}' => {
                            depth -= 1;
                            if depth == 0 {
                                break;
                            }
                            buf.push(ch);
                        }
                        _ => buf.push(ch),
                    }
                }
                if depth == 0 {
                    break;
                }
                match lines.next() {
                    Some(next) => {
                        buf.push('\n');
                        cur = next;
                    }
                    None => return Err(Error::MalformedList(key)),
                }
            }
            buf.trim().to_string()
        } else {
            rest.to_string()
        };
        entries.push((key, value));
    }
    Ok(entries)
}

/// Split a brace-list body on commas, trimming each item and dropping empties.
pub(crate) fn split_list(body: &str) -> Vec<&str> {
    body.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_and_list_entries() {
        let text = "samples = 4\nData Type = 12\nwavelength = {400.0,\n 500.0, 600.0}\n";
        let entries = parse_entries(text).unwrap();
        assert_eq!(entries[0], ("samples".into(), "4".into()));
        assert_eq!(entries[1], ("data type".into(), "12".into()));
        assert_eq!(entries[2].0, "wavelength");
        assert_eq!(split_list(&entries[2].1), vec!["400.0", "500.0", "600.0"]);
    }

    #[test]
    fn unterminated_list_is_malformed() {
        let err = parse_entries("wavelength = {400.0, 500.0\n").unwrap_err();
        assert!(matches!(err, Error::MalformedList(k) if k == "wavelength"));
    }

    #[test]
    fn comments_and_blanks_skipped() {
        let entries = parse_entries("; comment\n\n# other\nlines = 2\n").unwrap();
        assert_eq!(entries, vec![("lines".into(), "2".into())]);
    }
}

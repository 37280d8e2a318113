//! Word-level tokenisation helpers.
//!
//! Input features are whitespace-delimited words. Generated output is kept
//! as pieces that carry their leading whitespace, so concatenating the
//! pieces reproduces the generated text exactly.

/// Whitespace-delimited words of `text`.
pub fn words(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_string).collect()
}

/// Splits generated text into pieces, each carrying its leading whitespace.
pub fn output_pieces(text: &str) -> Vec<String> {
    let mut pieces = Vec::new();
    let mut current = String::new();
    let mut in_word = false;
    for c in text.chars() {
        if c.is_whitespace() {
            if in_word {
                pieces.push(std::mem::take(&mut current));
                in_word = false;
            }
            current.push(c);
        } else {
            in_word = true;
            current.push(c);
        }
    }
    if !current.is_empty() {
        if in_word || pieces.is_empty() {
            pieces.push(current);
        } else if let Some(last) = pieces.last_mut() {
            last.push_str(&current);
        }
    }
    pieces
}

pub fn join_words<S: AsRef<str>>(words: &[S]) -> String {
    words.iter().map(AsRef::as_ref).collect::<Vec<_>>().join(" ")
}

/// Trim, lowercase and collapse internal whitespace.
pub fn fold(text: &str) -> String {
    text.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

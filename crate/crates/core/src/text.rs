//! Label normalization shared by catalog validation and answer parsing.

/// Lowercases, maps every non-alphanumeric character to a space and
/// collapses runs of whitespace.
pub fn normalize_label(text: &str) -> String {
    tokens(text).join(" ")
}

pub fn tokens(text: &str) -> Vec<String> {
    let mapped: String = text
        .chars()
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect::<String>()
        .to_lowercase();
    mapped.split_whitespace().map(str::to_owned).collect()
}

//! Built-in fallback web page, used when no `--web-root` is configured.

pub fn builtin(name: &str) -> Option<&'static str> {
    match name {
        "index.html" => Some(include_str!("../assets/index.html")),
        "app.js" => Some(include_str!("../assets/app.js")),
        "style.css" => Some(include_str!("../assets/style.css")),
        _ => None,
    }
}

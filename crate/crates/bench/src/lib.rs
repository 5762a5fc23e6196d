//! Inputs shared by the benchmarks.

use serde_json::{json, Value};

/// Documentation page with two endpoints, each with tables and examples.
pub const TWO_ENDPOINTS: &str = include_str!("../../core/tests/fixtures/two_endpoints.html");

/// A page with `n` documented endpoints in their own sections.
pub fn many_sections(n: usize) -> String {
    let mut body = String::new();
    for i in 0..n {
        body.push_str(&format!(
            "<section><h2>Get thing {i}</h2><p><code>GET /v1/things{i}</code></p>\
<h3>Query parameters</h3><table><tr><th>Name</th><th>Type</th><th>Description</th></tr>\
<tr><td>limit</td><td>integer</td><td>Page size.</td></tr>\
<tr><td>cursor</td><td>string</td><td>Where to resume.</td></tr></table>\
<pre>curl \"https://api.example.test/v1/things{i}?limit=10&amp;cursor=abc\"</pre>\
<pre>{{\"id\": {i}, \"name\": \"thing\", \"tags\": [\"a\", \"b\"]}}</pre></section>\n"
        ));
    }
    format!("<html><body><main>{body}</main></body></html>")
}

/// A response example with `n` records, a few levels deep.
pub fn large_response(n: usize) -> Value {
    let items: Vec<Value> = (0..n)
        .map(|i| {
            json!({
                "id": i,
                "name": format!("item {i}"),
                "price": i as f64 + 0.25,
                "owner": {"id": i * 7, "email": "a@b.test", "active": i % 2 == 0},
                "tags": ["x", "y"],
                "meta": {"created": "2024-01-01", "note": null},
            })
        })
        .collect();
    json!({"data": items, "has_more": false, "total": n})
}

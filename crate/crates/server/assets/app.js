// Minimal fallback UI: one function fetches a page of results, one paginates.
let state = { query: "", page: 1, pageSize: 20, total: 0, seq: 0 };

async function fetchResults(query, page) {
  const seq = ++state.seq;
  const status = document.getElementById("status");
  status.textContent = "searching...";
  const params = new URLSearchParams({ q: query, page: String(page), page_size: String(state.pageSize) });
  let body;
  try {
    const resp = await fetch("/api/search?" + params);
    body = await resp.json();
    if (!resp.ok) throw new Error(body.error || body.status || resp.statusText);
  } catch (err) {
    if (seq === state.seq) status.textContent = "error: " + err.message;
    return;
  }
  if (seq !== state.seq) return;
  Object.assign(state, { query, page: body.page, total: body.total });
  status.textContent = `${body.total} results in ${body.elapsed_ms.toFixed(1)} ms` +
    (body.degraded ? ` (shards unavailable: ${body.degraded.join(", ")})` : "");
  const grid = document.getElementById("results");
  grid.replaceChildren(...body.results.map((r) => {
    const fig = document.createElement("figure");
    const img = document.createElement("img");
    img.src = "/images/" + r.path.split("/").map(encodeURIComponent).join("/");
    img.loading = "lazy";
    img.alt = r.path;
    const cap = document.createElement("figcaption");
    cap.textContent = `#${r.rank}  ${r.score.toFixed(3)}  ${r.path}`;
    fig.append(img, cap);
    return fig;
  }));
  paginate(0);
}

function paginate(delta) {
  const pages = Math.max(1, Math.ceil(state.total / state.pageSize));
  if (delta !== 0) {
    const target = state.page + delta;
    if (target >= 1 && target <= pages) fetchResults(state.query, target);
    return;
  }
  document.getElementById("pageinfo").textContent = `page ${state.page} of ${pages}`;
  document.getElementById("prev").disabled = state.page <= 1;
  document.getElementById("next").disabled = state.page >= pages;
}

document.getElementById("search").addEventListener("submit", (ev) => {
  ev.preventDefault();
  fetchResults(document.getElementById("q").value, 1);
});
document.getElementById("prev").addEventListener("click", () => paginate(-1));
document.getElementById("next").addEventListener("click", () => paginate(1));

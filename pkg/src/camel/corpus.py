"""Pages, viewports and gestures, plus seeded synthetic corpora and HTML ingestion."""

from __future__ import annotations

import math
import re
from dataclasses import asdict, dataclass, field
from html.parser import HTMLParser
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from camel.errors import ConfigurationError, DomainError
from camel.records import iter_records, read_header, write_records

GESTURES = ("scroll", "fling", "pinch")

TAG_VOCAB = (
    "div", "span", "a", "p", "img", "li", "ul", "script", "link", "meta",
    "input", "button", "section", "article", "header", "footer", "nav", "h1", "h2", "h3",
    "table", "tr", "td", "form", "label", "svg", "path", "i", "strong", "em",
    "iframe", "video", "source", "picture", "figure", "figcaption", "aside", "main", "ol", "br",
)
ATTR_VOCAB = (
    "class", "id", "href", "src", "style", "alt", "title", "type", "name", "value",
    "rel", "content", "width", "height", "target", "role", "aria-label", "aria-hidden", "data-id", "tabindex",
    "srcset", "sizes", "loading", "async", "defer", "placeholder", "action", "method", "for", "lang",
)
PROPERTY_VOCAB = (
    "display", "position", "top", "left", "right", "bottom", "width", "height", "min-width", "max-width",
    "min-height", "max-height", "margin", "margin-top", "margin-bottom", "margin-left", "margin-right", "padding",
    "padding-top", "padding-bottom", "padding-left", "padding-right", "border", "border-radius", "border-color",
    "color", "background", "background-color", "background-image", "font-size", "font-family", "font-weight",
    "line-height", "text-align", "text-decoration", "text-transform", "overflow", "z-index", "opacity",
    "transform", "transition", "animation", "box-shadow", "cursor", "flex", "align-items", "justify-content",
    "grid-template-columns",
)
SELECTOR_VOCAB = (
    "tag", "class", "id", "universal", "attribute", "pseudo-class", "pseudo-element", "descendant",
    "child", "adjacent-sibling", "general-sibling", "tag.class", "class.class", "tag#id", "grouped",
    "not", "nth-child", "hover", "media-query", "keyframes",
)

DEFAULT_VIEWPORT_HEIGHT = 2000
SCREEN_WIDTH_PX = 1080
SCHEDULING_WINDOW_S = 0.05


@dataclass(frozen=True)
class ViewportSlice:
    start_px: int
    end_px: int
    gpu_mem_footprint: int
    image_fraction: float
    text_density: float

    def __post_init__(self):
        if self.end_px <= self.start_px:
            raise DomainError(f"viewport end {self.end_px} must exceed start {self.start_px}")
        if not (0.0 <= self.image_fraction <= 1.0 and 0.0 <= self.text_density <= 1.0):
            raise DomainError("image_fraction and text_density must lie in [0, 1]")
        if self.image_fraction + self.text_density > 1.0 + 1e-12:
            raise DomainError("image_fraction + text_density exceeds 1")


@dataclass(frozen=True)
class PageDescriptor:
    id: str
    dom_node_count: int
    tree_depth: int
    tag_counts: dict
    attr_counts: dict
    style_rule_count: int
    property_counts: dict
    selector_pattern_counts: dict
    page_height_px: int
    viewport_profiles: tuple

    def __post_init__(self):
        if self.dom_node_count < 1 or self.tree_depth < 1:
            raise DomainError(f"{self.id}: dom_node_count and tree_depth must be >= 1")
        if self.page_height_px <= 0:
            raise DomainError(f"{self.id}: page_height_px must be positive")
        if not self.viewport_profiles:
            raise DomainError(f"{self.id}: no viewport slices")
        if self.viewport_profiles[0].start_px != 0:
            raise DomainError(f"{self.id}: first slice must start at 0")
        for prev, cur in zip(self.viewport_profiles, self.viewport_profiles[1:]):
            if cur.start_px != prev.end_px:
                raise DomainError(f"{self.id}: viewport slices are not contiguous")
        if self.viewport_profiles[-1].end_px != self.page_height_px:
            raise DomainError(f"{self.id}: slices must cover the page exactly")

    def slice_at(self, offset_px: float) -> ViewportSlice:
        """Return the slice containing ``offset_px``."""
        if not 0 <= offset_px < self.page_height_px:
            raise DomainError(f"offset {offset_px} outside page {self.id} of height {self.page_height_px}")
        starts = [s.start_px for s in self.viewport_profiles]
        idx = int(np.searchsorted(starts, offset_px, side="right")) - 1
        return self.viewport_profiles[idx]

    def slice_index(self, viewport: ViewportSlice) -> int:
        return self.viewport_profiles.index(viewport)

    def to_record(self) -> dict:
        rec = asdict(self)
        rec["viewport_profiles"] = [asdict(v) for v in self.viewport_profiles]
        return rec

    @classmethod
    def from_record(cls, rec: dict) -> "PageDescriptor":
        rec = dict(rec)
        rec["viewport_profiles"] = tuple(ViewportSlice(**v) for v in rec["viewport_profiles"])
        return cls(**rec)


@dataclass(frozen=True)
class Gesture:
    kind: str
    speed: float
    duration: float = 1.0

    def __post_init__(self):
        if self.kind not in GESTURES:
            raise DomainError(f"unknown gesture kind {self.kind!r}; expected one of {GESTURES}")
        if not (self.speed > 0 and self.duration > 0):
            raise DomainError("gesture speed and duration must be positive")


@dataclass(frozen=True)
class SizeProfile:
    """Ranges for synthetic page generation."""

    min_dom_nodes: int = 4
    max_dom_nodes: int = 7000
    viewport_height: int = DEFAULT_VIEWPORT_HEIGHT
    max_viewports: int = 12
    image_fraction_range: tuple = (0.0, 1.0)

    def validate(self) -> None:
        if not (1 <= self.min_dom_nodes <= self.max_dom_nodes):
            raise ConfigurationError(
                f"invalid DOM node range [{self.min_dom_nodes}, {self.max_dom_nodes}]")
        if self.viewport_height <= 0 or self.max_viewports < 1:
            raise ConfigurationError("viewport height and max_viewports must be positive")
        lo, hi = self.image_fraction_range
        if not (0.0 <= lo <= hi <= 1.0):
            raise ConfigurationError(f"invalid image fraction range {self.image_fraction_range}")


@dataclass(frozen=True)
class Corpus:
    pages: tuple
    seed: int = 0

    def __post_init__(self):
        ids = [p.id for p in self.pages]
        if len(set(ids)) != len(ids):
            raise DomainError("page ids in a corpus must be unique")

    def __len__(self) -> int:
        return len(self.pages)

    def __iter__(self):
        return iter(self.pages)

    def subset(self, indices: Iterable[int]) -> "Corpus":
        return Corpus(tuple(self.pages[i] for i in indices), self.seed)


# names whose share grows with image-heavy or text-heavy content
IMAGE_NAMES = {"img", "picture", "source", "figure", "figcaption", "svg", "path", "video",
                "src", "srcset", "sizes", "alt", "loading", "width", "height",
                "background-image", "background", "object-fit"}
TEXT_NAMES = {"p", "span", "a", "strong", "em", "h1", "h2", "h3", "li", "ol", "ul", "br",
               "href", "title", "lang", "font-size", "font-family", "font-weight", "line-height",
               "text-align", "text-decoration", "text-transform", "color"}


def _multinomial_counts(rng, total: int, vocab: Sequence[str], alpha: float,
                        image_share: float = 0.35, text_share: float = 0.4) -> dict:
    if total <= 0:
        return {}
    # vocabularies are listed roughly by how common each name is on real pages
    zipf = 1.0 / np.arange(1, len(vocab) + 1) ** 0.8
    tilt = np.array([math.exp(3.0 * (image_share - 0.35)) if v in IMAGE_NAMES
                     else math.exp(2.0 * (text_share - 0.4)) if v in TEXT_NAMES else 1.0
                     for v in vocab])
    weight = zipf * tilt
    p = rng.dirichlet(alpha * len(vocab) * weight / weight.sum())
    counts = rng.multinomial(total, p)
    return {name: int(c) for name, c in zip(vocab, counts) if c > 0}


def _build_page(rng, page_id: str, n_nodes: int, depth: int, page_img: float, n_viewports: float,
                vh: int, img_range=(0.0, 1.0), slice_noise: float = 0.08,
                text_density: float | None = None) -> PageDescriptor:
    mean_text = (1.0 - page_img) * 0.62 if text_density is None else text_density
    tags = _multinomial_counts(rng, n_nodes, TAG_VOCAB, 5.0, page_img, mean_text)
    attrs = _multinomial_counts(rng, int(round(n_nodes * rng.uniform(0.5, 2.5))), ATTR_VOCAB, 5.0,
                                page_img, mean_text)
    # roughly one page in ten ships no stylesheet at all
    rules = 0 if rng.random() < 0.1 else int(round(n_nodes * rng.uniform(0.1, 1.5))) + 1
    props = _multinomial_counts(rng, int(round(rules * rng.uniform(1.5, 6.0))), PROPERTY_VOCAB, 5.0,
                                page_img, mean_text)
    selectors = _multinomial_counts(rng, rules, SELECTOR_VOCAB, 5.0)

    height = max(int(round(vh * n_viewports)), vh // 2)
    img_lo, img_hi = img_range
    slices = []
    start = 0
    while start < height:
        end = min(start + vh, height)
        img = float(np.clip(page_img + rng.normal(0, slice_noise), img_lo, img_hi)) if slice_noise else page_img
        text = float((1.0 - img) * rng.uniform(0.3, 0.95)) if text_density is None else text_density
        area = SCREEN_WIDTH_PX * (end - start)
        jitter = rng.uniform(0.9, 1.1) if slice_noise else 1.0
        gpu = int(area * 4 * (1.0 + 2.0 * img) * jitter)
        slices.append(ViewportSlice(start, end, gpu, img, text))
        start = end

    return PageDescriptor(
        id=page_id,
        dom_node_count=n_nodes,
        tree_depth=depth,
        tag_counts=tags,
        attr_counts=attrs,
        style_rule_count=rules,
        property_counts=props,
        selector_pattern_counts=selectors,
        page_height_px=height,
        viewport_profiles=tuple(slices),
    )


def _generate_page(rng: np.random.Generator, page_id: str, profile: SizeProfile) -> PageDescriptor:
    # log-normal sizes, with a small log-uniform share so both range ends are reachable
    lo, hi = math.log(profile.min_dom_nodes), math.log(profile.max_dom_nodes)
    if rng.random() < 0.15:
        log_n = rng.uniform(lo, hi)
    else:
        log_n = rng.normal(lo + 0.75 * (hi - lo), 0.15 * (hi - lo))
    n_nodes = int(np.clip(round(math.exp(log_n)), profile.min_dom_nodes, profile.max_dom_nodes))
    depth = int(np.clip(round(1 + math.log2(n_nodes) * rng.uniform(0.6, 1.4)), 1, n_nodes))
    img_lo, img_hi = profile.image_fraction_range
    page_img = img_lo + (img_hi - img_lo) * rng.beta(1.3, 2.2)
    n_viewports = min(profile.max_viewports, 0.5 + n_nodes / 600 * rng.uniform(0.5, 1.5))
    return _build_page(rng, page_id, n_nodes, depth, page_img, n_viewports, profile.viewport_height,
                       profile.image_fraction_range)


def generate_corpus(seed: int, n_pages: int, size_profile: SizeProfile | None = None,
                    prefix: str = "page") -> Corpus:
    """Generate ``n_pages`` synthetic pages; a pure function of its arguments."""
    profile = size_profile or SizeProfile()
    if n_pages < 1:
        raise ConfigurationError(f"n_pages must be >= 1, got {n_pages}")
    profile.validate()
    rng = np.random.default_rng([seed, n_pages])
    pages = tuple(_generate_page(rng, f"{prefix}-{seed}-{i:05d}", profile) for i in range(n_pages))
    return Corpus(pages, seed)


def future_viewport(page: PageDescriptor, current_offset_px: float, gesture: Gesture,
                    window_s: float = SCHEDULING_WINDOW_S) -> ViewportSlice:
    """Slice the user will see after ``window_s`` seconds of ``gesture``."""
    if not 0 <= current_offset_px < page.page_height_px:
        raise DomainError(
            f"offset {current_offset_px} outside page {page.id} of height {page.page_height_px}")
    if window_s <= 0:
        raise DomainError(f"window must be positive, got {window_s}")
    if gesture.kind == "pinch":
        return page.slice_at(current_offset_px)
    target = min(page.page_height_px - 1, current_offset_px + gesture.speed * window_s)
    return page.slice_at(target)


# Fixture pages standing in for the BBC News and Wikipedia motivation examples.

def bbc_like_page(viewport_height: int = DEFAULT_VIEWPORT_HEIGHT) -> PageDescriptor:
    return _fixture_page("bbc-like", 1500, 14, image_fraction=0.75, text_density=0.2,
                         viewport_height=viewport_height)


def wikipedia_like_page(viewport_height: int = DEFAULT_VIEWPORT_HEIGHT) -> PageDescriptor:
    return _fixture_page("wikipedia-like", 2500, 16, image_fraction=0.0, text_density=0.9,
                         viewport_height=viewport_height)


def _fixture_page(page_id, n_nodes, depth, image_fraction, text_density, viewport_height):
    # drawn like a generated page, with content held constant across its four slices
    rng = np.random.default_rng([n_nodes, depth])
    return _build_page(rng, page_id, n_nodes, depth, image_fraction, 4.0, viewport_height,
                       slice_noise=0.0, text_density=text_density)


# --- corpus files ---------------------------------------------------------

CORPUS_FORMAT = "camel-corpus"


def save_corpus(corpus: Corpus, path: str | Path) -> Path:
    return write_records(path, CORPUS_FORMAT, (p.to_record() for p in corpus.pages), seed=corpus.seed)


def load_corpus(path: str | Path) -> Corpus:
    head = read_header(path, CORPUS_FORMAT)
    pages = tuple(PageDescriptor.from_record(r) for r in iter_records(path, CORPUS_FORMAT))
    return Corpus(pages, head.get("seed", 0))


# --- HTML ingestion -------------------------------------------------------

_VOID_TAGS = {"area", "base", "br", "col", "embed", "hr", "img", "input", "link", "meta",
              "param", "source", "track", "wbr"}
_CSS_RULE = re.compile(r"([^{}]+)\{([^{}]*)\}")


class _DomStats(HTMLParser):
    def __init__(self):
        super().__init__(convert_charrefs=True)
        self.nodes = 0
        self.depth = 0
        self.max_depth = 0
        self.tags: dict[str, int] = {}
        self.attrs: dict[str, int] = {}
        self.css: list[str] = []
        self.inline_styles: list[str] = []
        self.media_area = 0.0
        self.media_seen = False
        self.text_chars = 0
        self._in_style = False

    def handle_starttag(self, tag, attrs):
        self.nodes += 1
        self.tags[tag] = self.tags.get(tag, 0) + 1
        for name, value in attrs:
            self.attrs[name] = self.attrs.get(name, 0) + 1
            if name == "style" and value:
                self.inline_styles.append(value)
        if tag in ("img", "video"):
            a = dict(attrs)
            try:
                self.media_area += float(a.get("width", "")) * float(a.get("height", ""))
                self.media_seen = True
            except ValueError:
                pass
        if tag == "style":
            self._in_style = True
        if tag not in _VOID_TAGS:
            self.depth += 1
            self.max_depth = max(self.max_depth, self.depth)

    def handle_startendtag(self, tag, attrs):
        self.handle_starttag(tag, attrs)
        if tag not in _VOID_TAGS:
            self.depth -= 1

    def handle_endtag(self, tag):
        if tag == "style":
            self._in_style = False
        if tag not in _VOID_TAGS:
            self.depth = max(0, self.depth - 1)

    def handle_data(self, data):
        if self._in_style:
            self.css.append(data)
        else:
            self.text_chars += len(data.strip())


def _selector_patterns(selector: str) -> list[str]:
    s = selector.strip()
    out = []
    if s.startswith("@media"):
        return ["media-query"]
    if s.startswith("@keyframes"):
        return ["keyframes"]
    if "," in s:
        out.append("grouped")
    for part in s.split(","):
        p = part.strip()
        if not p:
            continue
        if ">" in p:
            out.append("child")
        elif "+" in p:
            out.append("adjacent-sibling")
        elif "~" in p:
            out.append("general-sibling")
        elif " " in p:
            out.append("descendant")
        if "::" in p:
            out.append("pseudo-element")
        if ":not(" in p:
            out.append("not")
        if ":nth-child" in p:
            out.append("nth-child")
        if ":hover" in p:
            out.append("hover")
        elif ":" in p.replace("::", ""):
            out.append("pseudo-class")
        if "[" in p:
            out.append("attribute")
        if p == "*":
            out.append("universal")
        last = re.split(r"[\s>+~]+", p)[-1]
        if re.match(r"^[a-zA-Z][\w-]*#", last):
            out.append("tag#id")
        elif re.match(r"^[a-zA-Z][\w-]*\.", last):
            out.append("tag.class")
        elif last.count(".") >= 2 and last.startswith("."):
            out.append("class.class")
        elif last.startswith("#"):
            out.append("id")
        elif last.startswith("."):
            out.append("class")
        elif re.match(r"^[a-zA-Z]", last):
            out.append("tag")
    return out


def page_from_html(page_id: str, html: str, viewport_height: int = DEFAULT_VIEWPORT_HEIGHT,
                   default_image_fraction: float = 0.3) -> PageDescriptor:
    """Build a descriptor from raw HTML using the synthetic generator's count semantics."""
    stats = _DomStats()
    stats.feed(html)
    stats.close()
    n_nodes = max(1, stats.nodes)

    rules = 0
    props: dict[str, int] = {}
    selectors: dict[str, int] = {}
    for block in stats.css:
        for sel, body in _CSS_RULE.findall(block):
            rules += 1
            for pat in _selector_patterns(sel):
                selectors[pat] = selectors.get(pat, 0) + 1
            for decl in body.split(";"):
                if ":" in decl:
                    name = decl.split(":", 1)[0].strip().lower()
                    props[name] = props.get(name, 0) + 1
    for style in stats.inline_styles:
        for decl in style.split(";"):
            if ":" in decl:
                name = decl.split(":", 1)[0].strip().lower()
                props[name] = props.get(name, 0) + 1

    # No layout engine: height grows with text volume and node count.
    height = max(viewport_height // 2, int(stats.text_chars * 0.6 + n_nodes * 12))
    if stats.media_seen:
        img = float(np.clip(stats.media_area / (SCREEN_WIDTH_PX * height), 0.0, 1.0))
    else:
        img = default_image_fraction
    text = float(np.clip(min(1.0 - img, stats.text_chars * 40.0 / (SCREEN_WIDTH_PX * height)), 0.0, 1.0))

    slices = []
    start = 0
    while start < height:
        end = min(start + viewport_height, height)
        gpu = int(SCREEN_WIDTH_PX * (end - start) * 4 * (1.0 + 2.0 * img))
        slices.append(ViewportSlice(start, end, gpu, img, text))
        start = end
    return PageDescriptor(
        id=page_id,
        dom_node_count=n_nodes,
        tree_depth=max(1, stats.max_depth),
        tag_counts=stats.tags,
        attr_counts=stats.attrs,
        style_rule_count=rules,
        property_counts=props,
        selector_pattern_counts=selectors,
        page_height_px=height,
        viewport_profiles=tuple(slices),
    )


def ingest_html_dir(directory: str | Path, viewport_height: int = DEFAULT_VIEWPORT_HEIGHT) -> Corpus:
    directory = Path(directory)
    files = sorted(p for p in directory.rglob("*") if p.suffix.lower() in (".html", ".htm"))
    pages = tuple(
        page_from_html(str(p.relative_to(directory)), p.read_text(encoding="utf-8", errors="replace"),
                       viewport_height)
        for p in files)
    return Corpus(pages, 0)

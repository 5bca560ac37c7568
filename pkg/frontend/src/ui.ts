/**
 * DOM wiring: entry page, intent chips, result grid with detail modal,
 * box brushing with the logic toolbar, change preview, reference upload.
 * At most one search request is in flight; new submissions cancel the prior.
 */

import { ApiClient, ApiError } from "./api.js";
import { dragToImageBox, imageBoxToDisplay, type DragGesture } from "./geometry.js";
import { PAGE_SIZE, SessionState, type SelectionMode } from "./session.js";
import type { Box, IntentPayload, ResultEntry } from "./schemas.js";

const MODE_COLORS: Record<SelectionMode, string> = {
  intersect: "#2563eb",
  exclude: "#dc2626",
  change: "#d97706",
};

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) {
    throw new Error(`missing element #${id}`);
  }
  return node as T;
}

export class App {
  private readonly session = new SessionState();
  private inflight: AbortController | null = null;
  private pendingPreviewBox: Box | null = null;

  constructor(private readonly api: ApiClient) {}

  start(): void {
    el<HTMLFormElement>("search-form").addEventListener("submit", (ev) => {
      ev.preventDefault();
      void this.runTextSearch();
    });
    el<HTMLButtonElement>("banner-dismiss").addEventListener("click", () => {
      el("error-banner").classList.add("hidden");
    });
    el<HTMLButtonElement>("modal-close").addEventListener("click", () => this.closeModal());
    el<HTMLButtonElement>("clear-selections").addEventListener("click", () => {
      this.session.selections = [];
      this.renderSelections();
    });
    el<HTMLSelectElement>("relation-select").addEventListener("change", (ev) => {
      this.session.relation = (ev.target as HTMLSelectElement).value as
        | "intersection"
        | "union";
    });
    el<HTMLInputElement>("extra-text").addEventListener("input", (ev) => {
      this.session.extraText = (ev.target as HTMLInputElement).value;
    });
    el<HTMLInputElement>("change-instruction").addEventListener("input", (ev) => {
      this.session.changeInstruction = (ev.target as HTMLInputElement).value;
    });
    el<HTMLButtonElement>("preview-button").addEventListener("click", () => {
      void this.runPreview();
    });
    el<HTMLButtonElement>("refine-button").addEventListener("click", () => {
      void this.runRefinement();
    });
    el<HTMLInputElement>("upload-input").addEventListener("change", (ev) => {
      const input = ev.target as HTMLInputElement;
      const file = input.files?.[0];
      if (file) {
        void this.openUploadedImage(file);
      }
      input.value = "";
    });
    this.wireBrushing();
    this.renderResults();
  }

  // ----- networking ---------------------------------------------------

  private beginRequest(): AbortSignal {
    this.inflight?.abort();
    this.inflight = new AbortController();
    return this.inflight.signal;
  }

  private showError(err: unknown): void {
    const banner = el("error-banner");
    const text = el("banner-text");
    if (err instanceof ApiError) {
      text.textContent = `${err.code}: ${err.message}`;
    } else if (err instanceof Error && err.name === "AbortError") {
      return; // superseded request
    } else {
      text.textContent = String(err);
    }
    banner.classList.remove("hidden");
  }

  private async runTextSearch(): Promise<void> {
    const query = el<HTMLInputElement>("search-input").value.trim();
    if (!query) {
      return;
    }
    const signal = this.beginRequest();
    try {
      const [search, parsed] = await Promise.all([
        this.api.search({ query, k: 60 }, signal),
        this.api.parse(query, signal).catch(() => null),
      ]);
      this.session.currentQuery = query;
      this.session.recordStep(`“${query}”`, search.intent, search.results);
      this.renderChips(search.intent, parsed?.suggestions ?? []);
      this.renderBreadcrumbs();
      this.renderResults();
    } catch (err) {
      this.showError(err);
    }
  }

  private async runRefinement(): Promise<void> {
    try {
      const request = this.session.buildVisualRequest(60);
      const signal = this.beginRequest();
      const search = await this.api.searchVisual(request, signal);
      const label = this.refinementLabel();
      this.session.recordStep(label, search.intent, search.results);
      this.closeModal();
      this.renderChips(search.intent, []);
      this.renderBreadcrumbs();
      this.renderResults();
    } catch (err) {
      this.showError(err);
    }
  }

  private async runPreview(): Promise<void> {
    const change = this.session.changeSelection();
    const image = this.session.activeImage;
    const instruction = this.session.changeInstruction.trim();
    if (!change || !image || !instruction) {
      this.showError(new Error("preview needs a change box and an instruction"));
      return;
    }
    try {
      const signal = this.beginRequest();
      const resp = await this.api.preview(
        { image: image.ref, box: change.box, instruction },
        signal,
      );
      this.pendingPreviewBox = change.box;
      const img = el<HTMLImageElement>("preview-image");
      img.src = `data:image/png;base64,${resp.image}`;
      el("preview-panel").classList.remove("hidden");
    } catch (err) {
      this.showError(err);
    }
  }

  private async openUploadedImage(file: File): Promise<void> {
    const dataUrl = await new Promise<string>((resolve, reject) => {
      const reader = new FileReader();
      reader.onload = () => resolve(String(reader.result));
      reader.onerror = () => reject(reader.error);
      reader.readAsDataURL(file);
    });
    const base64 = dataUrl.split(",", 2)[1] ?? "";
    const probe = new Image();
    probe.onload = () => {
      this.openModal(base64, probe.naturalWidth, probe.naturalHeight, dataUrl, true);
    };
    probe.src = dataUrl;
  }

  private refinementLabel(): string {
    const parts: string[] = [];
    const counts = { intersect: 0, exclude: 0, change: 0 };
    for (const sel of this.session.selections) {
      counts[sel.mode] += 1;
    }
    if (counts.intersect) parts.push(`${counts.intersect} region(s)`);
    if (counts.exclude) parts.push(`${counts.exclude} excluded`);
    if (counts.change) parts.push("1 change");
    if (this.session.extraText.trim()) parts.push(`+ “${this.session.extraText.trim()}”`);
    return `refine: ${parts.join(", ") || "visual"}`;
  }

  // ----- rendering ----------------------------------------------------

  private renderChips(intent: IntentPayload | null, suggestions: { element: string; tags: { tag: string; collection: string }[] }[]): void {
    const host = el("chips");
    host.innerHTML = "";
    if (!intent) {
      return;
    }
    const tagsFor = new Map(suggestions.map((s) => [s.element, s.tags]));
    for (const option of intent.options ?? []) {
      for (const text of option) {
        const chip = document.createElement("span");
        const isCollection = text.startsWith("C_");
        chip.className = isCollection ? "chip chip-collection" : "chip";
        chip.textContent = isCollection ? text.slice(2) : text;
        const tags = tagsFor.get(text);
        if (tags?.length) {
          chip.title = `similar tags: ${tags.map((t) => `${t.tag} (${t.collection})`).join(", ")}`;
        }
        host.appendChild(chip);
      }
    }
    for (const text of intent.negatives ?? []) {
      const chip = document.createElement("span");
      chip.className = "chip chip-negative";
      chip.textContent = `not ${text}`;
      host.appendChild(chip);
    }
    for (const change of intent.changes ?? []) {
      const chip = document.createElement("span");
      chip.className = "chip chip-change";
      chip.textContent = `${change.source} → ${change.target}`;
      host.appendChild(chip);
    }
    const meta = intent.metadata;
    if (meta?.collection) {
      const chip = document.createElement("span");
      chip.className = "chip chip-collection";
      chip.textContent = `collection: ${meta.collection}`;
      host.appendChild(chip);
    }
    if (meta?.price_order) {
      const chip = document.createElement("span");
      chip.className = "chip chip-meta";
      chip.textContent = meta.price_order === "desc" ? "price: high → low" : "price: low → high";
      host.appendChild(chip);
    }
    if (meta?.price_range) {
      const chip = document.createElement("span");
      chip.className = "chip chip-meta";
      chip.textContent = `price: ${meta.price_range[0]}–${meta.price_range[1]} ETH`;
      host.appendChild(chip);
    }
  }

  private renderBreadcrumbs(): void {
    const host = el("breadcrumbs");
    host.innerHTML = "";
    this.session.breadcrumbs.forEach((crumb, i) => {
      const button = document.createElement("button");
      button.className = "crumb";
      button.textContent = crumb.label;
      button.addEventListener("click", () => {
        this.session.goBack(i);
        this.renderChips(this.session.lastIntent, []);
        this.renderBreadcrumbs();
        this.renderResults();
      });
      host.appendChild(button);
    });
  }

  private renderResults(): void {
    const grid = el("results-grid");
    const empty = el("empty-state");
    grid.innerHTML = "";
    const pageItems = this.session.pageResults();
    empty.classList.toggle("hidden", this.session.results.length > 0);
    for (const entry of pageItems) {
      grid.appendChild(this.resultCard(entry));
    }
    this.renderPagination();
  }

  private resultCard(entry: ResultEntry): HTMLElement {
    const card = document.createElement("figure");
    card.className = "card";
    const img = document.createElement("img");
    img.src = this.api.imageUrl(entry.image_url);
    img.alt = entry.id;
    img.loading = "lazy";
    img.addEventListener("click", () => {
      const probe = new Image();
      probe.onload = () => {
        this.openModal(entry.id, probe.naturalWidth, probe.naturalHeight, probe.src, false);
      };
      probe.src = this.api.imageUrl(entry.image_url);
    });
    const caption = document.createElement("figcaption");
    caption.innerHTML = `<strong>${entry.collection || "—"}</strong><span>${entry.price} ETH</span>`;
    card.append(img, caption);
    return card;
  }

  private renderPagination(): void {
    const host = el("pagination");
    host.innerHTML = "";
    const pages = this.session.pageCount;
    if (this.session.results.length <= PAGE_SIZE) {
      return;
    }
    for (let i = 0; i < pages; i += 1) {
      const button = document.createElement("button");
      button.textContent = String(i + 1);
      button.className = i === this.session.page ? "page current" : "page";
      button.addEventListener("click", () => {
        this.session.page = i;
        this.renderResults();
      });
      host.appendChild(button);
    }
  }

  // ----- modal + brushing ----------------------------------------------

  private openModal(
    ref: string,
    width: number,
    height: number,
    src: string,
    uploaded: boolean,
  ): void {
    this.session.openImage(ref, width, height, uploaded);
    const img = el<HTMLImageElement>("modal-image");
    img.src = src;
    el("preview-panel").classList.add("hidden");
    el<HTMLInputElement>("extra-text").value = "";
    el<HTMLInputElement>("change-instruction").value = "";
    el("modal").classList.remove("hidden");
    img.decode().catch(() => undefined).finally(() => this.syncOverlay());
    this.renderSelections();
  }

  private closeModal(): void {
    this.session.closeImage();
    el("modal").classList.add("hidden");
  }

  private displayScale(): number {
    const img = el<HTMLImageElement>("modal-image");
    const image = this.session.activeImage;
    if (!image || !img.clientWidth) {
      return 1;
    }
    return img.clientWidth / image.width;
  }

  private syncOverlay(): void {
    const img = el<HTMLImageElement>("modal-image");
    const canvas = el<HTMLCanvasElement>("overlay");
    canvas.width = img.clientWidth;
    canvas.height = img.clientHeight;
    canvas.style.width = `${img.clientWidth}px`;
    canvas.style.height = `${img.clientHeight}px`;
    this.drawOverlay(null);
  }

  private wireBrushing(): void {
    const canvas = el<HTMLCanvasElement>("overlay");
    let drag: DragGesture | null = null;
    canvas.addEventListener("mousedown", (ev) => {
      const rect = canvas.getBoundingClientRect();
      drag = {
        startX: ev.clientX - rect.left,
        startY: ev.clientY - rect.top,
        endX: ev.clientX - rect.left,
        endY: ev.clientY - rect.top,
      };
    });
    canvas.addEventListener("mousemove", (ev) => {
      if (!drag) {
        return;
      }
      const rect = canvas.getBoundingClientRect();
      drag.endX = ev.clientX - rect.left;
      drag.endY = ev.clientY - rect.top;
      this.drawOverlay(drag);
    });
    const finish = () => {
      if (!drag || !this.session.activeImage) {
        drag = null;
        return;
      }
      const box = dragToImageBox(
        drag,
        this.displayScale(),
        this.session.activeImage.width,
        this.session.activeImage.height,
      );
      drag = null;
      if (box) {
        this.session.addSelection(box, "intersect");
        this.renderSelections();
      } else {
        this.drawOverlay(null);
      }
    };
    canvas.addEventListener("mouseup", finish);
    canvas.addEventListener("mouseleave", finish);
  }

  private drawOverlay(liveDrag: DragGesture | null): void {
    const canvas = el<HTMLCanvasElement>("overlay");
    const ctx = canvas.getContext("2d");
    if (!ctx) {
      return;
    }
    ctx.clearRect(0, 0, canvas.width, canvas.height);
    const scale = this.displayScale();
    this.session.selections.forEach((sel, i) => {
      const d = imageBoxToDisplay(sel.box, scale);
      ctx.strokeStyle = MODE_COLORS[sel.mode];
      ctx.lineWidth = 2;
      ctx.strokeRect(d.startX, d.startY, d.endX - d.startX, d.endY - d.startY);
      ctx.fillStyle = MODE_COLORS[sel.mode];
      ctx.font = "12px sans-serif";
      ctx.fillText(`${i + 1}:${sel.mode}`, d.startX + 3, d.startY + 13);
    });
    if (liveDrag) {
      ctx.strokeStyle = "#94a3b8";
      ctx.setLineDash([4, 3]);
      ctx.strokeRect(
        Math.min(liveDrag.startX, liveDrag.endX),
        Math.min(liveDrag.startY, liveDrag.endY),
        Math.abs(liveDrag.endX - liveDrag.startX),
        Math.abs(liveDrag.endY - liveDrag.startY),
      );
      ctx.setLineDash([]);
    }
  }

  private renderSelections(): void {
    const host = el("selections");
    host.innerHTML = "";
    this.session.selections.forEach((sel, i) => {
      const row = document.createElement("div");
      row.className = "selection-row";
      const label = document.createElement("span");
      label.textContent = `#${i + 1} [${sel.box.join(", ")}]`;
      const mode = document.createElement("button");
      mode.textContent = sel.mode;
      mode.style.color = MODE_COLORS[sel.mode];
      mode.title = "toggle intersect / exclude / change";
      mode.addEventListener("click", () => {
        this.session.cycleSelectionMode(i);
        this.renderSelections();
      });
      const remove = document.createElement("button");
      remove.textContent = "×";
      remove.addEventListener("click", () => {
        this.session.removeSelection(i);
        this.renderSelections();
      });
      row.append(label, mode, remove);
      host.appendChild(row);
    });
    el("change-tools").classList.toggle(
      "hidden",
      this.session.changeSelection() === null,
    );
    this.drawOverlay(null);
  }
}

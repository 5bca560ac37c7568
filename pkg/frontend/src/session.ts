/**
 * Client-side session state for the iterative search loop.
 *
 * The server is stateless: everything a refinement needs (active image, boxes
 * with their logic toggles, change instruction, extra text) lives here and is
 * packed into one VisualSearchRequest. Breadcrumbs record each executed step
 * so the user can walk back without server support.
 */

import {
  VisualSearchRequestSchema,
  type Box,
  type IntentPayload,
  type ResultEntry,
  type VisualSearchRequest,
} from "./schemas.js";

export type SelectionMode = "intersect" | "exclude" | "change";

export interface Selection {
  box: Box;
  mode: SelectionMode;
}

export interface ActiveImage {
  /** Gallery id, or base64 PNG payload for uploaded reference images. */
  ref: string;
  width: number;
  height: number;
  uploaded: boolean;
}

export interface Breadcrumb {
  label: string;
  intent: IntentPayload | null;
  results: ResultEntry[];
}

export const PAGE_SIZE = 20;

export class SessionState {
  currentQuery = "";
  lastIntent: IntentPayload | null = null;
  results: ResultEntry[] = [];
  page = 0;
  relation: "intersection" | "union" = "intersection";
  extraText = "";
  changeInstruction = "";
  changeTargetText = "";
  activeImage: ActiveImage | null = null;
  selections: Selection[] = [];
  breadcrumbs: Breadcrumb[] = [];

  get pageCount(): number {
    return Math.max(1, Math.ceil(this.results.length / PAGE_SIZE));
  }

  pageResults(): ResultEntry[] {
    const start = this.page * PAGE_SIZE;
    return this.results.slice(start, start + PAGE_SIZE);
  }

  openImage(ref: string, width: number, height: number, uploaded = false): void {
    this.activeImage = { ref, width, height, uploaded };
    this.selections = [];
    this.changeInstruction = "";
    this.changeTargetText = "";
    this.extraText = "";
  }

  closeImage(): void {
    this.activeImage = null;
    this.selections = [];
  }

  addSelection(box: Box, mode: SelectionMode = "intersect"): void {
    this.selections.push({ box, mode });
  }

  cycleSelectionMode(index: number): void {
    const order: SelectionMode[] = ["intersect", "exclude", "change"];
    const sel = this.selections[index];
    if (sel) {
      sel.mode = order[(order.indexOf(sel.mode) + 1) % order.length] ?? "intersect";
    }
  }

  removeSelection(index: number): void {
    this.selections.splice(index, 1);
  }

  /** The change selection is the last box toggled to change mode, if any. */
  changeSelection(): Selection | null {
    for (let i = this.selections.length - 1; i >= 0; i -= 1) {
      const sel = this.selections[i];
      if (sel && sel.mode === "change") {
        return sel;
      }
    }
    return null;
  }

  canSubmitRefinement(): boolean {
    return (
      this.activeImage !== null &&
      (this.selections.length > 0 || this.extraText.trim().length > 0)
    );
  }

  /**
   * Pack the pending state into a request body that satisfies the documented
   * schema exactly; throws if the state cannot form a valid request.
   */
  buildVisualRequest(k = 60): VisualSearchRequest {
    if (!this.activeImage) {
      throw new Error("no active image to refine from");
    }
    const selections: Box[] = [];
    const negatives: (string | Box)[] = [];
    let change: VisualSearchRequest["change"];
    for (const sel of this.selections) {
      if (sel.mode === "intersect") {
        selections.push(sel.box);
      } else if (sel.mode === "exclude") {
        negatives.push(sel.box);
      } else if (change === undefined) {
        change = { box: sel.box };
        if (this.changeInstruction.trim()) {
          change.instruction = this.changeInstruction.trim();
        }
        if (this.changeTargetText.trim()) {
          change.target_text = this.changeTargetText.trim();
        }
        if (!change.instruction && !change.target_text) {
          throw new Error("a change box needs an instruction or target text");
        }
      }
    }
    const request: VisualSearchRequest = {
      base_image: this.activeImage.ref,
      selections,
      relation: this.relation,
      negatives,
      k,
    };
    if (change !== undefined) {
      request.change = change;
    }
    const extra = this.extraText.trim();
    if (extra) {
      request.extra_text = extra;
    }
    return VisualSearchRequestSchema.parse(request);
  }

  recordStep(label: string, intent: IntentPayload | null, results: ResultEntry[]): void {
    this.breadcrumbs.push({ label, intent, results: [...results] });
    this.lastIntent = intent;
    this.results = [...results];
    this.page = 0;
  }

  /** Restore a previous step; drops everything after it. Returns false at the root. */
  goBack(index: number): boolean {
    const crumb = this.breadcrumbs[index];
    if (!crumb) {
      return false;
    }
    this.breadcrumbs = this.breadcrumbs.slice(0, index + 1);
    this.lastIntent = crumb.intent;
    this.results = [...crumb.results];
    this.page = 0;
    this.closeImage();
    return true;
  }
}

import { ApiClient } from "./api.js";
import { ReviewController } from "./app.js";

const reviewer =
  new URLSearchParams(window.location.search).get("reviewer") ?? "reviewer";
const api = new ApiClient("", undefined, reviewer);
const controller = new ReviewController(api, document);

controller
  .init()
  .then(() => {
    controller.startQueuePolling();
    bindTextSelection(controller);
  })
  .catch((error) => {
    const banner = document.getElementById("retrain-status");
    if (banner) banner.textContent = `failed to load: ${error}`;
  });

/** Map a browser text selection inside the document view to char offsets. */
function bindTextSelection(ctl: ReviewController): void {
  document.addEventListener("selectionchange", () => {
    const selection = window.getSelection();
    const container = document.getElementById("document");
    if (!selection || selection.rangeCount === 0 || !container) return;
    const range = selection.getRangeAt(0);
    if (!container.contains(range.commonAncestorContainer)) return;
    const offset = (node: Node, within: number): number | null => {
      const walker = document.createTreeWalker(container, NodeFilter.SHOW_TEXT);
      let total = 0;
      let current: Node | null = walker.nextNode();
      while (current) {
        if (current === node) return total + within;
        if (!(current.parentElement?.closest(".warning-strip, .label-chip"))) {
          total += current.textContent?.length ?? 0;
        }
        current = walker.nextNode();
      }
      return null;
    };
    const start = offset(range.startContainer, range.startOffset);
    const end = offset(range.endContainer, range.endOffset);
    if (start !== null && end !== null && start < end) {
      ctl.setSelection(start, end);
    }
  });
}

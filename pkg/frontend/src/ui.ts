// DOM rendering for the task screens. Neutral gray theme, fixed-size
// lazy-loaded thumbnails (no layout shift), keyboard operable throughout:
// digits 1-6 (intrusion) or 1-4 (matching) select, Enter confirms.

import { ApiClient, IntrusionItem, MatchingItem, choiceCount } from "./api.js";
import { Session, SessionState } from "./session.js";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function thumbnail(api: ApiClient, framePath: string): HTMLImageElement {
  const img = el("img", "thumb");
  img.src = api.frameUrl(framePath);
  img.loading = "lazy";
  img.width = 200;
  img.height = 150;
  img.alt = "frame";
  return img;
}

function progressBar(state: SessionState): HTMLElement {
  const wrap = el("div", "progress");
  const label = el("span", "progress-label",
    `${state.answered} / ${state.total || "?"} answered`);
  const track = el("div", "progress-track");
  const fill = el("div", "progress-fill");
  const fraction = state.total ? state.answered / state.total : 0;
  fill.style.width = `${Math.round(fraction * 100)}%`;
  track.appendChild(fill);
  wrap.append(label, track);
  return wrap;
}

function intrusionGrid(api: ApiClient, item: IntrusionItem, session: Session,
                       selected: number | null): HTMLElement {
  const grid = el("div", "intrusion-grid");
  grid.setAttribute("data-testid", "intrusion-grid");
  item.images.forEach((framePath, position) => {
    const cell = el("button", "cell");
    cell.type = "button";
    cell.setAttribute("data-position", String(position));
    if (position === selected) cell.classList.add("selected");
    cell.appendChild(thumbnail(api, framePath));
    cell.appendChild(el("span", "cell-index", String(position + 1)));
    cell.addEventListener("click", () => session.select(position));
    grid.appendChild(cell);
  });
  return grid;
}

function matchingBoard(api: ApiClient, item: MatchingItem, session: Session,
                       selected: number | null): HTMLElement {
  const board = el("div", "matching-board");
  board.setAttribute("data-testid", "matching-board");
  const probeBox = el("div", "probe");
  probeBox.appendChild(el("p", "probe-label", "Which row does this image belong to?"));
  probeBox.appendChild(thumbnail(api, item.images[0]));
  board.appendChild(probeBox);
  item.rows.forEach((row, index) => {
    const rowButton = el("button", "row");
    rowButton.type = "button";
    rowButton.setAttribute("data-row", String(index));
    if (index === selected) rowButton.classList.add("selected");
    rowButton.appendChild(el("span", "row-index", String(index + 1)));
    for (const framePath of row) {
      rowButton.appendChild(thumbnail(api, framePath));
    }
    rowButton.addEventListener("click", () => session.select(index));
    board.appendChild(rowButton);
  });
  return board;
}

export function render(root: HTMLElement, api: ApiClient, session: Session,
                       state: SessionState): void {
  root.textContent = "";
  const screen = el("div", "screen");

  if (state.phase === "loading") {
    screen.appendChild(el("p", "status", "Loading your next item..."));
    root.appendChild(screen);
    return;
  }

  if (state.phase === "done") {
    const doneBox = el("div", "complete");
    doneBox.setAttribute("data-testid", "complete");
    doneBox.appendChild(el("h2", undefined, "Task complete"));
    doneBox.appendChild(el("p", undefined,
      `All ${state.total} items answered. Thank you!`));
    // accuracy intentionally withheld: coders stay blind to the keys
    screen.appendChild(doneBox);
    root.appendChild(screen);
    return;
  }

  screen.appendChild(progressBar(state));

  if (state.item) {
    screen.appendChild(
      state.item.kind === "image_intrusion"
        ? intrusionGrid(api, state.item, session, state.selected)
        : matchingBoard(api, state.item, session, state.selected),
    );
    const hint = state.item.kind === "image_intrusion"
      ? "Pick the image that does not belong (keys 1-6), then press Enter."
      : "Pick the matching row (keys 1-4), then press Enter.";
    screen.appendChild(el("p", "hint", hint));

    const confirm = el("button", "confirm", "Confirm");
    confirm.type = "button";
    confirm.setAttribute("data-testid", "confirm");
    confirm.disabled = state.selected === null || state.phase === "submitting";
    confirm.addEventListener("click", () => void session.confirm());
    screen.appendChild(confirm);
  }

  if (state.phase === "network-error") {
    const banner = el("div", "banner");
    banner.setAttribute("data-testid", "retry-banner");
    banner.appendChild(el("span", undefined,
      "Connection problem; your choice is saved."));
    const retry = el("button", "retry", "Retry");
    retry.type = "button";
    retry.addEventListener("click", () => void session.retry());
    banner.appendChild(retry);
    screen.appendChild(banner);
  }

  root.appendChild(screen);
}

export function attachKeyboard(target: EventTarget, session: Session): void {
  target.addEventListener("keydown", (event) => {
    const key = (event as KeyboardEvent).key;
    const state = session.snapshot();
    if (key === "Enter") {
      void session.confirm();
      return;
    }
    const digit = Number.parseInt(key, 10);
    if (!Number.isNaN(digit) && digit >= 1 && digit <= choiceCount(state.kind)) {
      session.select(digit - 1);
    }
  });
}

export function mount(root: HTMLElement, api: ApiClient, session: Session): void {
  session.onChange((state) => render(root, api, session, state));
  attachKeyboard(root.ownerDocument, session);
  render(root, api, session, session.snapshot());
}

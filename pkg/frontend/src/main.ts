// Entry point: a small landing form (coder id + task choice), then the
// task screen. The coder id is self-asserted, per protocol.

import { ApiClient, TaskKind } from "./api.js";
import { Session } from "./session.js";
import { mount } from "./ui.js";

function startTask(root: HTMLElement, coder: string, kind: TaskKind): void {
  const api = new ApiClient("");
  const session = new Session(api, coder, kind);
  mount(root, api, session);
  void session.start();
}

export function renderLanding(root: HTMLElement): void {
  root.textContent = "";
  const form = document.createElement("form");
  form.className = "landing";

  const label = document.createElement("label");
  label.textContent = "Coder id";
  const input = document.createElement("input");
  input.name = "coder";
  input.required = true;
  input.placeholder = "e.g. coder1";
  label.appendChild(input);
  form.appendChild(label);

  const pick = (kind: TaskKind, text: string) => {
    const button = document.createElement("button");
    button.type = "submit";
    button.textContent = text;
    button.addEventListener("click", (event) => {
      event.preventDefault();
      const coder = input.value.trim();
      if (coder) startTask(root, coder, kind);
    });
    form.appendChild(button);
  };
  pick("image_intrusion", "Start Image Intrusion");
  pick("topic_matching", "Start Topic Matching");
  root.appendChild(form);
}

const rootElement = document.getElementById("app");
if (rootElement) {
  renderLanding(rootElement);
}

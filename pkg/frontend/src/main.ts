/**
 * DOM wiring for the console: chat pane, plan panel with status badges,
 * artifact gallery with audio playback, upload, and history clearing.
 * Polls the session every second while a request is in flight.
 */

import { ArtifactView, GatewayClient } from "./api.js";
import {
  ViewState,
  clearHistory,
  emptyViewState,
  previewSymbolicAsAudio,
  sendMessage,
  uploadAudio,
} from "./state.js";

const POLL_MS = 1000;

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

class Console {
  private state: ViewState;
  private client: GatewayClient;

  private turnsBox = document.getElementById("turns") as HTMLElement;
  private planBox = document.getElementById("plan") as HTMLElement;
  private galleryBox = document.getElementById("gallery") as HTMLElement;
  private banner = document.getElementById("banner") as HTMLElement;
  private errorBox = document.getElementById("error") as HTMLElement;
  private input = document.getElementById("message") as HTMLInputElement;
  private sendBtn = document.getElementById("send") as HTMLButtonElement;
  private clearBtn = document.getElementById("clear") as HTMLButtonElement;
  private fileInput = document.getElementById("upload") as HTMLInputElement;

  constructor() {
    const sessionId = `web-${Math.random().toString(36).slice(2, 10)}`;
    this.client = new GatewayClient("");
    this.state = emptyViewState(sessionId);

    this.sendBtn.addEventListener("click", () => void this.onSend());
    this.input.addEventListener("keydown", (e) => {
      if (e.key === "Enter") void this.onSend();
    });
    this.clearBtn.addEventListener("click", () => void this.onClear());
    this.fileInput.addEventListener("change", () => void this.onUpload());
    this.render();
  }

  private setState(state: ViewState) {
    this.state = state;
    this.render();
  }

  private async onSend() {
    const text = this.input.value.trim();
    if (!text || this.state.inFlight) return;
    this.setState({ ...this.state, inFlight: true });
    const next = await sendMessage(this.client, { ...this.state, inFlight: false }, text, POLL_MS);
    if (next.error === null) this.input.value = ""; // preserve input on failure
    this.setState(next);
  }

  private async onClear() {
    this.setState(await clearHistory(this.client, this.state));
  }

  private async onUpload() {
    const file = this.fileInput.files?.[0];
    if (!file) return;
    this.setState(await uploadAudio(this.client, this.state, file, file.name));
    this.fileInput.value = "";
  }

  private async onPreview(artifact: ArtifactView) {
    this.setState(await previewSymbolicAsAudio(this.client, this.state, artifact));
  }

  private render() {
    this.sendBtn.disabled = this.state.inFlight;
    this.banner.hidden = !this.state.degraded;
    this.errorBox.hidden = !this.state.error;
    this.errorBox.textContent = this.state.error ?? "";

    this.turnsBox.replaceChildren(
      ...this.state.turns.map((turn) =>
        el("div", `turn turn-${turn.role}`, `${turn.role}: ${turn.text}`),
      ),
    );

    this.planBox.replaceChildren(
      ...this.state.plan.map((node) => {
        const badge = el("div", `node node-${node.status}`);
        badge.append(
          el("span", "node-id", node.id),
          el("span", "node-task", node.task),
          el("span", "node-status", node.status),
        );
        if (node.deps.length) badge.append(el("span", "node-deps", `← ${node.deps.join(", ")}`));
        return badge;
      }),
    );

    this.galleryBox.replaceChildren(
      ...this.state.gallery.map((artifact) => this.renderArtifact(artifact)),
    );
  }

  private renderArtifact(artifact: ArtifactView): HTMLElement {
    const card = el("div", "artifact");
    const title = el("a", "artifact-id", `${artifact.id} (${artifact.modality})`);
    title.setAttribute("href", this.client.artifactUrl(artifact));
    card.append(title);
    title.addEventListener("click", (e) => {
      if (e.metaKey || e.ctrlKey) return;
      e.preventDefault();
      this.input.value += ` ${artifact.id}`; // insert id into the chat input
    });

    if (artifact.modality === "audio") {
      const audio = el("audio");
      audio.controls = true;
      audio.src = this.client.artifactUrl(artifact);
      card.append(audio);
      if (artifact.duration_seconds !== undefined) {
        card.append(el("div", "artifact-meta", `${artifact.duration_seconds}s`));
      }
    } else if (artifact.modality === "symbolic") {
      card.append(el("pre", "artifact-preview", artifact.preview ?? ""));
      const btn = el("button", "preview-btn", "preview as audio");
      btn.addEventListener("click", () => void this.onPreview(artifact));
      card.append(btn);
    } else {
      card.append(el("pre", "artifact-preview", artifact.preview ?? ""));
    }
    return card;
  }
}

if (typeof document !== "undefined" && document.getElementById("send")) {
  new Console();
}

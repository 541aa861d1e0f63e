// Browser bootstrap: find the page panels, start a session, wire inputs.

import { Api } from "./api.js";
import { ArchitectConsole } from "./app.js";
import type { Panels } from "./render.js";

function panel(id: string): HTMLElement {
    const node = document.getElementById(id);
    if (!node) throw new Error(`missing #${id}`);
    return node;
}

export async function boot(baseUrl = ""): Promise<ArchitectConsole> {
    const panels: Panels = {
        layers: panel("layers"),
        chat: panel("chat"),
        composer: panel("composer"),
        shapes: panel("shapes"),
        toasts: panel("toasts"),
        replay: panel("replay"),
    };
    const app = new ArchitectConsole(new Api(baseUrl || window.location.origin), panels);

    const input = panels.composer.querySelector<HTMLInputElement>(".instruction-input");
    const send = panels.composer.querySelector<HTMLButtonElement>(".instruction-send");
    const submit = async () => {
        if (!input || !input.value.trim()) return;
        const text = input.value.trim();
        input.value = "";
        await app.submitInstruction(text);
    };
    send?.addEventListener("click", () => void submit());
    input?.addEventListener("keydown", (e) => {
        if (e.key === "Enter") void submit();
    });

    panels.chat.addEventListener("click", (e) => {
        const target = e.target as HTMLElement;
        if (target.dataset.action !== "answer") return;
        const box = target.parentElement?.querySelector<HTMLInputElement>(".answer-input");
        if (box && box.value.trim()) {
            const text = box.value.trim();
            box.value = "";
            void app.answerClarification(text);
        }
    });

    panels.shapes.addEventListener("click", (e) => {
        const target = e.target as HTMLElement;
        if (target.dataset.action !== "pick-shape" || !target.dataset.shape) return;
        app.selectShape(target.dataset.shape);
        const x = Number(window.prompt("column (1-16)?", "1"));
        const y = Number(window.prompt("row (1-16)?", "1"));
        const color = window.prompt("color override (empty for none)?", "") || undefined;
        if (x >= 1 && y >= 1) {
            void app.applyShape(target.dataset.shape, x, y, color ? { color } : {});
        }
    });

    panels.replay.addEventListener("click", (e) => {
        const action = (e.target as HTMLElement).dataset.action;
        if (action === "replay-prev") app.replayStep(-1);
        if (action === "replay-next") app.replayStep(1);
        if (action === "replay-exit") app.exitReplay();
    });

    document.getElementById("enter-replay")?.addEventListener("click", () => void app.enterReplay());
    panels.toasts.addEventListener("click", () => app.dismissToasts());

    await app.start();
    return app;
}

if (typeof document !== "undefined" && document.getElementById("layers")) {
    void boot().catch((err) => {
        const toasts = document.getElementById("toasts");
        if (toasts) toasts.textContent = `failed to start: ${err}`;
    });
}

// Chat client: one trainee session per page. Renders agent bubbles, choice
// buttons, failure feedback, and a six-slot progress bar; video mode plays
// the stream hands-free using the server's pacing hints.
import { Api } from "./api.js";
const SPEAKER_NAMES = {
    clara: "Clara",
    mary: "Mary",
    user: "You",
};
export class ChatApp {
    constructor(doc, serverBase, opts = {}) {
        this.sessionId = "";
        this.mode = "roleplay";
        this.lastSeq = 0;
        this.menuSeq = 0;
        this.inFlight = 0;
        this.choiceInFlight = false;
        this.idleResolvers = [];
        this.videoQueue = [];
        this.videoPaused = false;
        this.videoTimer = null;
        this.doc = doc;
        this.api = new Api(serverBase);
        this.opts = opts;
        this.renderStartScreen();
    }
    // ---- test/instrumentation hooks ----
    get currentSessionId() {
        return this.sessionId;
    }
    idle() {
        if (this.inFlight === 0)
            return Promise.resolve();
        return new Promise((resolve) => this.idleResolvers.push(resolve));
    }
    began() {
        this.inFlight += 1;
    }
    ended() {
        this.inFlight -= 1;
        if (this.inFlight === 0) {
            for (const resolve of this.idleResolvers.splice(0))
                resolve();
        }
    }
    // ---- DOM scaffolding ----
    el(tag, className, text) {
        const node = this.doc.createElement(tag);
        if (className)
            node.className = className;
        if (text !== undefined)
            node.textContent = text;
        return node;
    }
    root() {
        let root = this.doc.getElementById("app");
        if (!root) {
            root = this.el("div");
            root.id = "app";
            this.doc.body.appendChild(root);
        }
        return root;
    }
    renderStartScreen() {
        const root = this.root();
        root.innerHTML = "";
        const panel = this.el("div", "start-panel");
        panel.appendChild(this.el("h1", "title", "MI Coach"));
        panel.appendChild(this.el("p", "subtitle", "Practice caring conversations about COVID-19 vaccination."));
        const name = this.el("input", "name-input");
        name.id = "first-name";
        name.placeholder = "Your first name";
        panel.appendChild(name);
        const select = this.el("select", "mode-select");
        select.id = "mode";
        for (const mode of ["roleplay", "didactic", "video"]) {
            const option = this.el("option", undefined, mode);
            option.value = mode;
            select.appendChild(option);
        }
        panel.appendChild(select);
        const button = this.el("button", "start-button", "Start training");
        button.id = "start";
        button.addEventListener("click", () => {
            void this.start(name.value.trim(), select.value);
        });
        panel.appendChild(button);
        const banner = this.el("div", "error-banner hidden");
        banner.id = "start-error";
        panel.appendChild(banner);
        root.appendChild(panel);
    }
    async start(firstName, mode) {
        this.mode = mode;
        this.began();
        try {
            const started = await this.api.createSession(mode, firstName, firstName || "anonymous");
            this.sessionId = started.session_id;
            this.renderChatScreen();
            if (mode === "video") {
                this.videoQueue = started.events.slice();
                this.playNextVideoEvent();
            }
            else {
                this.consumeEvents(started.events);
            }
            await this.refreshProgress();
        }
        catch (err) {
            const banner = this.doc.getElementById("start-error");
            if (banner) {
                banner.textContent = "Could not reach the training service. Check it and try again.";
                banner.classList.remove("hidden");
            }
        }
        finally {
            this.ended();
        }
    }
    renderChatScreen() {
        const root = this.root();
        root.innerHTML = "";
        const banner = this.el("div", `mode-banner mode-${this.mode}`);
        banner.id = "mode-banner";
        banner.textContent =
            this.mode === "video"
                ? "Video mode: watch a successful conversation play out."
                : this.mode === "didactic"
                    ? "Didactic mode: Clara teaches, you answer her questions."
                    : "Role-play mode: practice each skill with Mary.";
        root.appendChild(banner);
        const progress = this.el("div", "progress");
        progress.id = "progress";
        root.appendChild(progress);
        const messages = this.el("div", "messages");
        messages.id = "messages";
        root.appendChild(messages);
        const feedback = this.el("div", "feedback-banner hidden");
        feedback.id = "feedback";
        root.appendChild(feedback);
        const options = this.el("div", "options");
        options.id = "options";
        root.appendChild(options);
        if (this.mode === "video") {
            const pause = this.el("button", "pause-button", "Pause");
            pause.id = "pause";
            pause.addEventListener("click", () => this.toggleVideoPause(pause));
            root.appendChild(pause);
        }
    }
    // ---- event stream rendering ----
    consumeEvents(events) {
        for (const event of events) {
            this.renderEvent(event);
        }
    }
    renderEvent(event) {
        if (event.seq <= this.lastSeq)
            return;
        this.lastSeq = event.seq;
        switch (event.kind) {
            case "AgentUtterance":
            case "RecapUtterance":
            case "FailureUtterance":
            case "ChoiceMade":
                this.appendBubble(event);
                break;
            case "MenuShown":
                this.menuSeq = event.seq;
                this.renderOptions(event.options ?? []);
                break;
            case "SegmentFailed":
                this.showFeedback("That response upset Mary. Take a breath and try the role-play again.");
                break;
            case "SegmentCompleted":
                void this.refreshProgress();
                break;
            case "SessionCompleted":
                this.renderOptions([]);
                this.showFeedback("Training complete. Well done!", "success");
                void this.refreshProgress();
                break;
        }
    }
    appendBubble(event) {
        const messages = this.doc.getElementById("messages");
        if (!messages || event.text === undefined)
            return;
        const isUser = event.kind === "ChoiceMade" || event.speaker === "user";
        const classes = ["bubble", isUser ? "from-user" : "from-agent"];
        if (event.kind === "FailureUtterance")
            classes.push("failure");
        if (event.kind === "RecapUtterance" && !isUser)
            classes.push("recap");
        const bubble = this.el("div", classes.join(" "));
        bubble.dataset.seq = String(event.seq);
        const who = this.el("span", "speaker", SPEAKER_NAMES[event.speaker ?? ""] ?? event.speaker ?? "");
        const text = this.el("span", "text", event.text);
        bubble.appendChild(who);
        bubble.appendChild(text);
        messages.appendChild(bubble);
    }
    renderOptions(options) {
        const host = this.doc.getElementById("options");
        if (!host)
            return;
        host.innerHTML = "";
        for (const option of options) {
            const button = this.el("button", "option-button", option.label);
            button.dataset.optionId = option.id;
            button.addEventListener("click", () => {
                void this.choose(option.id);
            });
            host.appendChild(button);
        }
    }
    setOptionsDisabled(disabled) {
        const host = this.doc.getElementById("options");
        if (!host)
            return;
        for (const button of Array.from(host.querySelectorAll("button"))) {
            button.disabled = disabled;
        }
    }
    showFeedback(text, tone = "failure") {
        const banner = this.doc.getElementById("feedback");
        if (!banner)
            return;
        banner.textContent = text;
        banner.className = `feedback-banner ${tone}`;
    }
    hideFeedback() {
        const banner = this.doc.getElementById("feedback");
        if (banner)
            banner.className = "feedback-banner hidden";
    }
    async choose(optionId) {
        if (this.choiceInFlight)
            return; // double-click guard
        this.choiceInFlight = true;
        this.began();
        this.setOptionsDisabled(true);
        const answeredSeq = this.menuSeq;
        try {
            const result = await this.api.postChoice(this.sessionId, optionId, answeredSeq);
            this.hideFeedback();
            this.renderOptions([]);
            this.consumeEvents(result.events);
        }
        catch (err) {
            // A stale menu (409) or vanished option (400): resync with the server.
            await this.resync();
        }
        finally {
            this.setOptionsDisabled(false);
            this.choiceInFlight = false;
            this.ended();
        }
    }
    async resync() {
        try {
            const turn = await this.api.getTurn(this.sessionId, this.lastSeq);
            this.consumeEvents(turn.events);
            if (turn.status === "awaiting_choice") {
                this.renderOptions(turn.options);
            }
            else {
                this.renderOptions([]);
            }
        }
        catch {
            this.showFeedback("Lost the connection to the training service.");
        }
    }
    async refreshProgress() {
        this.began();
        try {
            const progress = await this.api.getProgress(this.sessionId);
            this.renderProgress(progress);
        }
        catch {
            // progress is cosmetic; leave the last rendering in place
        }
        finally {
            this.ended();
        }
    }
    renderProgress(progress) {
        const host = this.doc.getElementById("progress");
        if (!host)
            return;
        host.innerHTML = "";
        for (let i = 0; i < progress.skills_total; i += 1) {
            const slot = this.el("span", i < progress.skills_completed ? "slot done" : "slot");
            host.appendChild(slot);
        }
        const label = this.el("span", "progress-label", progress.current_skill
            ? `Skill ${Math.min(progress.skills_completed + 1, progress.skills_total)} of ${progress.skills_total}: ${progress.current_skill.replace("_", " ")}`
            : `All ${progress.skills_total} skills complete`);
        host.appendChild(label);
        const mistakes = this.el("span", "mistake-count", `Mistakes: ${progress.mistakes}`);
        host.appendChild(mistakes);
    }
    // ---- video mode pacing ----
    holdMs(event) {
        if (this.opts.pacing)
            return this.opts.pacing(event);
        return (event.display_seconds ?? 1) * 1000;
    }
    playNextVideoEvent() {
        if (this.videoPaused)
            return;
        const event = this.videoQueue.shift();
        if (!event)
            return;
        this.renderEvent(event);
        if (this.videoQueue.length > 0) {
            this.videoTimer = setTimeout(() => this.playNextVideoEvent(), this.holdMs(event));
        }
    }
    toggleVideoPause(button) {
        this.videoPaused = !this.videoPaused;
        button.textContent = this.videoPaused ? "Resume" : "Pause";
        if (!this.videoPaused) {
            this.playNextVideoEvent();
        }
        else if (this.videoTimer !== null) {
            clearTimeout(this.videoTimer);
            this.videoTimer = null;
        }
    }
    videoDone() {
        return this.videoQueue.length === 0;
    }
}
export function initApp(doc, serverBase, opts = {}) {
    return new ChatApp(doc, serverBase, opts);
}
if (typeof window !== "undefined" && typeof document !== "undefined") {
    window.addEventListener("DOMContentLoaded", () => {
        initApp(document, "");
    });
}
